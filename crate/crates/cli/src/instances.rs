//! Graph families addressable from the command line.
//!
//! A spec is either a family with parameters (`hamming:6:1,2,3`,
//! `johnson:8:4:3`, `complete:6`, `cycle:8`, `path:5`, `cliques:2:6`,
//! `gnp:30:0.2:7`) or the name of one of the reference instances.

use anyhow::{bail, Context, Result};
use gepsdp::generators::{complete, cycle, disjoint_cliques, gnp, hamming, johnson, path};
use gepsdp::Graph;

/// Reference instances: name, family spec, and the value of `1/2 <L, X>` at
/// the bisection optimum.
pub const REFERENCE: &[(&str, &str, f64)] = &[
    ("hamming6-2", "hamming:6:1", 64.0),
    ("hamming8-2", "hamming:8:1", 256.0),
    ("hamming-6-4", "hamming:6:1,2,3", 1024.0),
    ("hamming-8-4", "hamming:8:1,2,3", 7424.0),
    ("hamming-9-8", "hamming:9:8", 0.0),
    ("hamming-7-5-6", "hamming:7:5,6", 1536.0),
    ("hamming-8-3-4", "hamming:8:3,4", 14336.0),
    ("johnson8-4-4", "johnson:8:4:3", 280.0),
    ("johnson16-2-4", "johnson:16:2:1", 960.0),
];

fn num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.parse().ok().with_context(|| format!("cannot parse {what} from {s:?}"))
}

pub fn build(spec: &str) -> Result<Graph> {
    if let Some((_, family, _)) = REFERENCE.iter().find(|(name, _, _)| *name == spec) {
        return build(family);
    }
    let parts: Vec<&str> = spec.split(':').collect();
    let arity = |k: usize| -> Result<()> {
        if parts.len() != k + 1 {
            bail!("{:?} expects {k} parameter(s)", parts[0]);
        }
        Ok(())
    };
    let g = match parts[0] {
        "hamming" => {
            arity(2)?;
            let bits: u32 = num(parts[1], "bit count")?;
            if bits == 0 || bits > 16 {
                bail!("bit count must be in 1..=16");
            }
            let d = parts[2].split(',').map(|x| num(x, "distance")).collect::<Result<Vec<u32>>>()?;
            hamming(bits, &d)
        }
        "johnson" => {
            arity(3)?;
            let (m, w, meet) = (num(parts[1], "ground set")?, num(parts[2], "subset size")?, num(parts[3], "meet")?);
            if w == 0 || w >= m || meet > w || m > 24 {
                bail!("need meet <= size < ground <= 24 and size >= 1");
            }
            johnson(m, w, meet)
        }
        "complete" | "path" | "cycle" => {
            arity(1)?;
            let n: usize = num(parts[1], "n")?;
            if n < 3 {
                bail!("n must be at least 3");
            }
            match parts[0] {
                "complete" => complete(n),
                "path" => path(n),
                _ => cycle(n),
            }
        }
        "cliques" => {
            arity(2)?;
            let (count, size): (usize, usize) = (num(parts[1], "clique count")?, num(parts[2], "clique size")?);
            if count == 0 || size == 0 || count * size < 2 {
                bail!("need at least two vertices");
            }
            disjoint_cliques(count, size)
        }
        "gnp" => {
            arity(3)?;
            let n: usize = num(parts[1], "n")?;
            let p: f64 = num(parts[2], "edge probability")?;
            if !(0.0..=1.0).contains(&p) || n < 2 {
                bail!("need n >= 2 and edge probability in [0, 1]");
            }
            gnp(n, p, num(parts[3], "seed")?)
        }
        other => bail!("unknown graph family {other:?}"),
    };
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_sizes() {
        let sizes: Vec<usize> = REFERENCE.iter().map(|(n, _, _)| build(n).unwrap().n()).collect();
        assert_eq!(sizes, vec![64, 256, 64, 256, 512, 128, 256, 70, 120]);
    }

    #[test]
    fn bad_specs() {
        assert!(build("hamming:6").is_err());
        assert!(build("gnp:10:2:1").is_err());
        assert!(build("nope:3").is_err());
        assert_eq!(build("cliques:2:3").unwrap().edge_count(), 6);
    }
}

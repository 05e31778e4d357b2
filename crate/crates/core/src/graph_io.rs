//! Graph ingestion and the sparse graph Laplacian.
//!
//! Two on-disk formats are accepted:
//!
//! * **edge list**: optional `%`/`#` comment lines, a header `n m`, then `m`
//!   lines `i j [w]` with 0-based vertex indices;
//! * **Matrix Market**: `coordinate pattern symmetric` or
//!   `coordinate real symmetric`, 1-based, one triangle only.
//!
//! Self-loops, duplicate pairs, out-of-range indices and non-positive
//! weights are rejected rather than repaired.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphFormat {
    EdgeList,
    MatrixMarket,
}

impl FromStr for GraphFormat {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "edge-list" | "edgelist" | "edges" => Ok(GraphFormat::EdgeList),
            "matrix-market" | "mtx" | "mm" => Ok(GraphFormat::MatrixMarket),
            other => Err(GraphError::UnknownFormat(other.to_string())),
        }
    }
}

impl GraphFormat {
    /// Guess the format from a file extension (`.mtx` is Matrix Market).
    pub fn from_path(path: &Path) -> GraphFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("mtx") | Some("mm") => GraphFormat::MatrixMarket,
            _ => GraphFormat::EdgeList,
        }
    }
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: duplicate edge ({i}, {j})")]
    DuplicateEdge { line: usize, i: usize, j: usize },
    #[error("line {line}: self-loop at vertex {vertex}")]
    SelfLoop { line: usize, vertex: usize },
    #[error("line {line}: vertex index {index} out of range for n = {n}")]
    IndexOutOfRange { line: usize, index: usize, n: usize },
    #[error("line {line}: edge weight {weight} is not positive and finite")]
    BadWeight { line: usize, weight: f64 },
    #[error("header declares {declared} entries but {found} were read")]
    CountMismatch { declared: usize, found: usize },
    #[error("a graph needs at least 2 vertices, got {0}")]
    TooSmall(usize),
    #[error("unsupported Matrix Market header: {0}")]
    Unsupported(String),
    #[error("unknown graph format {0:?}")]
    UnknownFormat(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub w: f64,
}

/// Undirected weighted graph with a sorted, duplicate-free edge list (`i < j`).
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    edges: Vec<Edge>,
    header_m: Option<usize>,
}

impl Graph {
    /// Build a graph from `(i, j, w)` triples. Each unordered pair may appear once.
    pub fn new<I>(n: usize, edges: I) -> Result<Graph, GraphError>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut raw = Vec::new();
        for (k, (i, j, w)) in edges.into_iter().enumerate() {
            raw.push((k + 1, i, j, w));
        }
        Graph::from_raw(n, raw, None)
    }

    /// Unweighted convenience constructor.
    pub fn unweighted<I>(n: usize, edges: I) -> Result<Graph, GraphError>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        Graph::new(n, edges.into_iter().map(|(i, j)| (i, j, 1.0)))
    }

    fn from_raw(
        n: usize,
        raw: Vec<(usize, usize, usize, f64)>,
        header_m: Option<usize>,
    ) -> Result<Graph, GraphError> {
        if n < 2 {
            return Err(GraphError::TooSmall(n));
        }
        let mut edges = Vec::with_capacity(raw.len());
        let mut lines = Vec::with_capacity(raw.len());
        for (line, i, j, w) in raw {
            for idx in [i, j] {
                if idx >= n {
                    return Err(GraphError::IndexOutOfRange { line, index: idx, n });
                }
            }
            if i == j {
                return Err(GraphError::SelfLoop { line, vertex: i });
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(GraphError::BadWeight { line, weight: w });
            }
            edges.push(Edge { i: i.min(j), j: i.max(j), w });
            lines.push(line);
        }
        let mut order: Vec<usize> = (0..edges.len()).collect();
        order.sort_by_key(|&k| (edges[k].i, edges[k].j, lines[k]));
        for pair in order.windows(2) {
            let (a, b) = (&edges[pair[0]], &edges[pair[1]]);
            if a.i == b.i && a.j == b.j {
                return Err(GraphError::DuplicateEdge { line: lines[pair[1]], i: b.i, j: b.j });
            }
        }
        let edges = order.into_iter().map(|k| edges[k]).collect();
        Ok(Graph { n, edges, header_m })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Entry count declared by the file header, if the graph came from a file.
    pub fn header_m(&self) -> Option<usize> {
        self.header_m
    }

    pub fn is_unweighted(&self) -> bool {
        self.edges.iter().all(|e| e.w == 1.0)
    }

    /// Serialize in the edge-list format accepted by [`parse_edge_list`].
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{} {}", self.n, self.edges.len()).unwrap();
        let unweighted = self.is_unweighted();
        for e in &self.edges {
            if unweighted {
                writeln!(out, "{} {}", e.i, e.j).unwrap();
            } else {
                writeln!(out, "{} {} {:?}", e.i, e.j, e.w).unwrap();
            }
        }
        out
    }

    /// Serialize as a Matrix Market symmetric file (lower triangle, 1-based).
    pub fn to_matrix_market(&self) -> String {
        let mut out = String::new();
        let unweighted = self.is_unweighted();
        let field = if unweighted { "pattern" } else { "real" };
        writeln!(out, "%%MatrixMarket matrix coordinate {field} symmetric").unwrap();
        writeln!(out, "{} {} {}", self.n, self.n, self.edges.len()).unwrap();
        for e in &self.edges {
            if unweighted {
                writeln!(out, "{} {}", e.j + 1, e.i + 1).unwrap();
            } else {
                writeln!(out, "{} {} {:?}", e.j + 1, e.i + 1, e.w).unwrap();
            }
        }
        out
    }
}

pub fn load_graph(path: impl AsRef<Path>, format: GraphFormat) -> Result<Graph, GraphError> {
    let text = std::fs::read_to_string(path)?;
    match format {
        GraphFormat::EdgeList => parse_edge_list(&text),
        GraphFormat::MatrixMarket => parse_matrix_market(&text),
    }
}

fn parse_num<T: FromStr>(tok: &str, line: usize, what: &str) -> Result<T, GraphError> {
    tok.parse().map_err(|_| GraphError::Parse {
        line,
        msg: format!("cannot parse {what} from {tok:?}"),
    })
}

fn content_lines<'a>(text: &'a str, comments: &'a [char]) -> impl Iterator<Item = (usize, &'a str)> {
    text.lines().enumerate().filter_map(move |(k, l)| {
        let t = l.trim();
        if t.is_empty() || t.starts_with(comments) {
            None
        } else {
            Some((k + 1, t))
        }
    })
}

pub fn parse_edge_list(text: &str) -> Result<Graph, GraphError> {
    let mut lines = content_lines(text, &['%', '#']);
    let (hline, header) = lines.next().ok_or(GraphError::Parse {
        line: 1,
        msg: "missing \"n m\" header".into(),
    })?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.len() != 2 {
        return Err(GraphError::Parse { line: hline, msg: "header must be \"n m\"".into() });
    }
    let n: usize = parse_num(toks[0], hline, "n")?;
    let m: usize = parse_num(toks[1], hline, "m")?;

    let mut raw = Vec::with_capacity(m);
    for (line, l) in lines {
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != 2 && toks.len() != 3 {
            return Err(GraphError::Parse { line, msg: "expected \"i j [w]\"".into() });
        }
        let i: usize = parse_num(toks[0], line, "vertex index")?;
        let j: usize = parse_num(toks[1], line, "vertex index")?;
        let w = match toks.get(2) {
            Some(t) => parse_num(t, line, "weight")?,
            None => 1.0,
        };
        raw.push((line, i, j, w));
    }
    if raw.len() != m {
        return Err(GraphError::CountMismatch { declared: m, found: raw.len() });
    }
    Graph::from_raw(n, raw, Some(m))
}

pub fn parse_matrix_market(text: &str) -> Result<Graph, GraphError> {
    let mut all = text.lines().enumerate();
    let (_, banner) = all.next().ok_or(GraphError::Parse { line: 1, msg: "empty file".into() })?;
    let b: Vec<String> = banner.split_whitespace().map(|t| t.to_ascii_lowercase()).collect();
    if b.len() != 5 || b[0] != "%%matrixmarket" || b[1] != "matrix" || b[2] != "coordinate" {
        return Err(GraphError::Unsupported(banner.trim().to_string()));
    }
    let pattern = match b[3].as_str() {
        "pattern" => true,
        "real" | "integer" => false,
        _ => return Err(GraphError::Unsupported(banner.trim().to_string())),
    };
    if b[4] != "symmetric" {
        return Err(GraphError::Unsupported(banner.trim().to_string()));
    }

    let mut lines = content_lines(text, &['%']);
    let (hline, header) = lines.next().ok_or(GraphError::Parse {
        line: 2,
        msg: "missing size line".into(),
    })?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.len() != 3 {
        return Err(GraphError::Parse { line: hline, msg: "size line must be \"rows cols nnz\"".into() });
    }
    let rows: usize = parse_num(toks[0], hline, "rows")?;
    let cols: usize = parse_num(toks[1], hline, "cols")?;
    let nnz: usize = parse_num(toks[2], hline, "nnz")?;
    if rows != cols {
        return Err(GraphError::Parse { line: hline, msg: format!("matrix is {rows}x{cols}, not square") });
    }

    let want = if pattern { 2 } else { 3 };
    let mut raw = Vec::with_capacity(nnz);
    for (line, l) in lines {
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != want {
            return Err(GraphError::Parse { line, msg: format!("expected {want} fields") });
        }
        let i: usize = parse_num(toks[0], line, "row index")?;
        let j: usize = parse_num(toks[1], line, "column index")?;
        if i == 0 || j == 0 {
            return Err(GraphError::Parse { line, msg: "Matrix Market indices are 1-based".into() });
        }
        let w = if pattern { 1.0 } else { parse_num(toks[2], line, "weight")? };
        raw.push((line, i - 1, j - 1, w));
    }
    if raw.len() != nnz {
        return Err(GraphError::CountMismatch { declared: nnz, found: raw.len() });
    }
    Graph::from_raw(rows, raw, Some(nnz))
}

#[derive(Debug, Error, PartialEq)]
#[error("shape mismatch: operator is {n}x{n}, argument has {rows} rows")]
pub struct ShapeError {
    pub n: usize,
    pub rows: usize,
}

/// Sparse symmetric Laplacian `L = D - A` in compressed-row form.
///
/// Off-diagonal entries are stored in CSR; the diagonal is kept separately.
#[derive(Debug, Clone)]
pub struct Laplacian<T> {
    n: usize,
    diag: Vec<T>,
    row_ptr: Vec<usize>,
    col: Vec<usize>,
    val: Vec<T>,
    frob: T,
}

pub fn laplacian<T: Real>(g: &Graph) -> Laplacian<T> {
    let n = g.n();
    let mut deg = vec![0.0f64; n];
    let mut counts = vec![0usize; n];
    for e in g.edges() {
        deg[e.i] += e.w;
        deg[e.j] += e.w;
        counts[e.i] += 1;
        counts[e.j] += 1;
    }
    let mut row_ptr = vec![0usize; n + 1];
    for i in 0..n {
        row_ptr[i + 1] = row_ptr[i] + counts[i];
    }
    let nnz = row_ptr[n];
    let mut col = vec![0usize; nnz];
    let mut val = vec![T::zero(); nnz];
    let mut fill = row_ptr.clone();
    for e in g.edges() {
        for (a, b) in [(e.i, e.j), (e.j, e.i)] {
            col[fill[a]] = b;
            val[fill[a]] = T::lit(-e.w);
            fill[a] += 1;
        }
    }
    for i in 0..n {
        let (lo, hi) = (row_ptr[i], row_ptr[i + 1]);
        let mut pairs: Vec<(usize, T)> = (lo..hi).map(|k| (col[k], val[k])).collect();
        pairs.sort_by_key(|p| p.0);
        for (k, (c, v)) in pairs.into_iter().enumerate() {
            col[lo + k] = c;
            val[lo + k] = v;
        }
    }
    let frob2: f64 = deg.iter().map(|d| d * d).sum::<f64>()
        + 2.0 * g.edges().iter().map(|e| e.w * e.w).sum::<f64>();
    Laplacian {
        n,
        diag: deg.into_iter().map(T::lit).collect(),
        row_ptr,
        col,
        val,
        frob: T::lit(frob2.sqrt()),
    }
}

impl<T: Real> Laplacian<T> {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn diag(&self) -> &[T] {
        &self.diag
    }

    /// Frobenius norm, computed once from the sparse structure.
    pub fn frobenius_norm(&self) -> T {
        self.frob
    }

    /// Upper bound on the spectral norm (largest absolute row sum).
    pub fn norm_inf(&self) -> T {
        (0..self.n)
            .map(|i| {
                let off: T = self.val[self.row_ptr[i]..self.row_ptr[i + 1]]
                    .iter()
                    .fold(T::zero(), |acc, v| acc + v.abs());
                self.diag[i] + off
            })
            .fold(T::zero(), |a, b| a.max(b))
    }

    /// Off-diagonal neighbours of row `i` as `(column, value)` pairs.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col[r.clone()].iter().copied().zip(self.val[r].iter().copied())
    }

    /// `Y = L X` for a dense `n x r` matrix.
    pub fn apply(&self, x: &DMatrix<T>) -> Result<DMatrix<T>, ShapeError> {
        if x.nrows() != self.n {
            return Err(ShapeError { n: self.n, rows: x.nrows() });
        }
        let r = x.ncols();
        let mut y = DMatrix::zeros(self.n, r);
        for c in 0..r {
            let xc = x.column(c);
            let mut yc = y.column_mut(c);
            for i in 0..self.n {
                let mut acc = self.diag[i] * xc[i];
                for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                    acc += self.val[k] * xc[self.col[k]];
                }
                yc[i] = acc;
            }
        }
        Ok(y)
    }

    pub fn apply_vec(&self, x: &DVector<T>) -> Result<DVector<T>, ShapeError> {
        if x.len() != self.n {
            return Err(ShapeError { n: self.n, rows: x.len() });
        }
        let mut y = DVector::zeros(self.n);
        for i in 0..self.n {
            let mut acc = self.diag[i] * x[i];
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.val[k] * x[self.col[k]];
            }
            y[i] = acc;
        }
        Ok(y)
    }

    /// Dense materialization; for tests and small instances.
    pub fn to_dense(&self) -> DMatrix<T> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            m[(i, i)] = self.diag[i];
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }
}

/// Free-function form of [`Laplacian::apply`].
pub fn laplacian_apply<T: Real>(l: &Laplacian<T>, x: &DMatrix<T>) -> Result<DMatrix<T>, ShapeError> {
    l.apply(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn k4_mtx() -> &'static str {
        "%%MatrixMarket matrix coordinate pattern symmetric\n% K4\n4 4 6\n2 1\n3 1\n4 1\n3 2\n4 2\n4 3\n"
    }

    #[test]
    fn edge_list_path_graph() {
        let g = parse_edge_list("# P3\n3 2\n0 1\n1 2\n").unwrap();
        assert_eq!(g.n(), 3);
        assert_eq!(g.edges(), &[Edge { i: 0, j: 1, w: 1.0 }, Edge { i: 1, j: 2, w: 1.0 }]);
        assert_eq!(g.header_m(), Some(2));
    }

    #[test]
    fn edges_sorted_and_oriented() {
        let g = parse_edge_list("3 2\n2 1\n1 0 2.5\n").unwrap();
        assert_eq!(g.edges(), &[Edge { i: 0, j: 1, w: 2.5 }, Edge { i: 1, j: 2, w: 1.0 }]);
    }

    #[test]
    fn matrix_market_k4() {
        let g = parse_matrix_market(k4_mtx()).unwrap();
        assert_eq!(g.n(), 4);
        assert_eq!(g.edge_count(), 6);
    }

    #[test]
    fn matrix_market_real_weights() {
        let g = parse_matrix_market("%%MatrixMarket matrix coordinate real symmetric\n3 3 2\n2 1 0.5\n3 2 2\n")
            .unwrap();
        assert_eq!(g.edges()[0].w, 0.5);
        assert_eq!(g.edges()[1].w, 2.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(parse_edge_list("3 1\n2 2\n"), Err(GraphError::SelfLoop { line: 2, vertex: 2 })));
        assert!(matches!(
            parse_edge_list("3 2\n0 1\n1 0\n"),
            Err(GraphError::DuplicateEdge { line: 3, i: 0, j: 1 })
        ));
        assert!(matches!(
            parse_edge_list("3 1\n0 3\n"),
            Err(GraphError::IndexOutOfRange { line: 2, index: 3, n: 3 })
        ));
        assert!(matches!(parse_edge_list("3 1\n0 x\n"), Err(GraphError::Parse { line: 2, .. })));
        assert!(matches!(parse_edge_list("3 1\n0 1 -1\n"), Err(GraphError::BadWeight { .. })));
        assert!(matches!(parse_edge_list("3 2\n0 1\n"), Err(GraphError::CountMismatch { .. })));
        assert!(matches!(parse_edge_list("1 0\n"), Err(GraphError::TooSmall(1))));
        assert!(matches!(
            parse_matrix_market("%%MatrixMarket matrix coordinate pattern symmetric\n3 3 2\n2 1\n1 2\n"),
            Err(GraphError::DuplicateEdge { .. })
        ));
        assert!(matches!(
            parse_matrix_market("%%MatrixMarket matrix array real general\n3 3\n"),
            Err(GraphError::Unsupported(_))
        ));
    }

    #[test]
    fn parse_error_reports_line_after_comments() {
        let err = parse_edge_list("% a\n% b\n3 1\n\n0 q\n").unwrap_err();
        assert!(matches!(err, GraphError::Parse { line: 5, .. }), "{err}");
    }

    #[test]
    fn laplacian_k4_and_p3() {
        let l: Laplacian<f64> = laplacian(&parse_matrix_market(k4_mtx()).unwrap());
        let d = l.to_dense();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(d[(i, j)], if i == j { 3.0 } else { -1.0 });
            }
        }
        let p3: Laplacian<f64> = laplacian(&Graph::unweighted(3, [(0, 1), (1, 2)]).unwrap());
        let want = DMatrix::from_row_slice(3, 3, &[1., -1., 0., -1., 2., -1., 0., -1., 1.]);
        assert_eq!(p3.to_dense(), want);
        let y = p3.apply(&DMatrix::from_column_slice(3, 1, &[1., 0., -1.])).unwrap();
        assert_eq!(y.as_slice(), &[1., 0., -1.]);
        assert_eq!(p3.frobenius_norm(), want.norm());
    }

    #[test]
    fn laplacian_annihilates_ones() {
        let l: Laplacian<f64> = laplacian(&parse_matrix_market(k4_mtx()).unwrap());
        let y = l.apply(&DMatrix::from_element(4, 1, 1.0)).unwrap();
        assert!(y.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn quadratic_form_matches_edge_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut edges = Vec::new();
        for i in 0..10 {
            for j in i + 1..10 {
                if rng.gen_bool(0.4) {
                    edges.push((i, j, rng.gen_range(0.5..2.0)));
                }
            }
        }
        let g = Graph::new(10, edges).unwrap();
        let l: Laplacian<f64> = laplacian(&g);
        let ones = l.apply_vec(&DVector::from_element(10, 1.0)).unwrap();
        assert!(ones.amax() < 1e-12);
        for _ in 0..100 {
            let x = DVector::from_fn(10, |_, _| rng.gen_range(-1.0..1.0));
            let q = x.dot(&l.apply_vec(&x).unwrap());
            let direct: f64 = g.edges().iter().map(|e| e.w * (x[e.i] - x[e.j]).powi(2)).sum();
            assert!((q - direct).abs() <= 1e-12 * (1.0 + direct.abs()));
        }
    }

    #[test]
    fn sparse_apply_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut edges = Vec::new();
        for i in 0..50 {
            for j in i + 1..50 {
                if rng.gen_bool(0.1) {
                    edges.push((i, j));
                }
            }
        }
        let l: Laplacian<f64> = laplacian(&Graph::unweighted(50, edges).unwrap());
        let x = DMatrix::from_fn(50, 7, |_, _| rng.gen_range(-1.0..1.0));
        let dense = l.to_dense() * &x;
        let sparse = laplacian_apply(&l, &x).unwrap();
        assert!((dense - sparse).norm() <= 1e-12 * x.norm() * l.frobenius_norm());
        assert_eq!(
            l.apply(&DMatrix::zeros(3, 1)).unwrap_err(),
            ShapeError { n: 50, rows: 3 }
        );
    }

    #[test]
    fn serialize_round_trip() {
        let g = Graph::new(5, [(0, 4, 1.5), (1, 2, 1.0), (3, 2, 0.25)]).unwrap();
        let again = parse_edge_list(&g.to_edge_list()).unwrap();
        assert_eq!(again.edges(), g.edges());
        let mm = parse_matrix_market(&g.to_matrix_market()).unwrap();
        assert_eq!(mm.edges(), g.edges());
    }
}

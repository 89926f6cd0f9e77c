//! Interaction graphs for the Trotter builders.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl Topology {
    /// Edges are normalized to `i < j` and kept in the given order.
    pub fn new(n: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Validation("topology has no sites".into()));
        }
        let mut norm = Vec::with_capacity(edges.len());
        let mut seen = rustc_hash::FxHashSet::default();
        for (a, b) in edges {
            if a == b {
                return Err(Error::Validation(format!("self edge ({a},{a})")));
            }
            let e = (a.min(b), a.max(b));
            if e.1 >= n {
                return Err(Error::Validation(format!("edge {e:?} out of range for {n} sites")));
            }
            if !seen.insert(e) {
                return Err(Error::Validation(format!("duplicate edge {e:?}")));
            }
            norm.push(e);
        }
        Ok(Topology { n, edges: norm })
    }

    pub fn chain(n: usize) -> Result<Self> {
        Topology::new(n, (1..n).map(|i| (i - 1, i)).collect())
    }

    /// Row-major sites `r * cols + c`; horizontal edges first, then vertical.
    pub fn grid(rows: usize, cols: usize) -> Result<Self> {
        let mut edges = Vec::new();
        for r in 0..rows {
            for c in 1..cols {
                edges.push((r * cols + c - 1, r * cols + c));
            }
        }
        for r in 1..rows {
            for c in 0..cols {
                edges.push(((r - 1) * cols + c, r * cols + c));
            }
        }
        Topology::new(rows * cols, edges)
    }

    /// The 127-site heavy-hex lattice with the standard Eagle numbering.
    pub fn heavyhex127() -> Self {
        let rows: [(usize, usize); 7] = [
            (0, 13),
            (18, 32),
            (37, 51),
            (56, 70),
            (75, 89),
            (94, 108),
            (113, 126),
        ];
        let mut edges = Vec::with_capacity(144);
        for (lo, hi) in rows {
            for q in lo..hi {
                edges.push((q, q + 1));
            }
        }
        // (bridge site, upper row site, lower row site)
        let bridges: [(usize, usize, usize); 24] = [
            (14, 0, 18),
            (15, 4, 22),
            (16, 8, 26),
            (17, 12, 30),
            (33, 20, 39),
            (34, 24, 43),
            (35, 28, 47),
            (36, 32, 51),
            (52, 37, 56),
            (53, 41, 60),
            (54, 45, 64),
            (55, 49, 68),
            (71, 58, 77),
            (72, 62, 81),
            (73, 66, 85),
            (74, 70, 89),
            (90, 75, 94),
            (91, 79, 98),
            (92, 83, 102),
            (93, 87, 106),
            (109, 96, 114),
            (110, 100, 118),
            (111, 104, 122),
            (112, 108, 126),
        ];
        for (b, up, down) in bridges {
            edges.push((up, b));
            edges.push((b, down));
        }
        Topology::new(127, edges).expect("heavy-hex table is well formed")
    }

    pub fn by_name(name: &str) -> Result<Self> {
        let lower = name.to_ascii_lowercase();
        if lower == "heavyhex127" {
            return Ok(Topology::heavyhex127());
        }
        if let Some(rest) = lower.strip_prefix("chain") {
            let n = rest
                .trim_matches(|c| c == '(' || c == ')' || c == ':')
                .parse()
                .map_err(|_| Error::Config(format!("bad chain size in {name:?}")))?;
            return Topology::chain(n);
        }
        if let Some(rest) = lower.strip_prefix("grid") {
            let dims: Vec<usize> = rest
                .trim_matches(|c| c == '(' || c == ')' || c == ':')
                .split(['x', ','])
                .map(|s| s.trim().parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Config(format!("bad grid dims in {name:?}")))?;
            if dims.len() != 2 {
                return Err(Error::Config(format!("grid needs rows x cols, got {name:?}")));
            }
            return Topology::grid(dims[0], dims[1]);
        }
        Err(Error::Config(format!(
            "unknown topology {name:?}; expected chainN, gridRxC or heavyhex127"
        )))
    }

    pub fn num_sites(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n];
        for &(a, b) in &self.edges {
            d[a] += 1;
            d[b] += 1;
        }
        d
    }

    pub fn max_degree(&self) -> usize {
        self.degrees().into_iter().max().unwrap_or(0)
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        let e = (a.min(b), a.max(b));
        self.edges.contains(&e)
    }
}

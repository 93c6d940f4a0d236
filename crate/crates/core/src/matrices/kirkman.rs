//! Kirkman triple systems as sensing matrices.
//!
//! An `m x (m/3)c` matrix built from `c` parallel classes of a resolvable
//! triple system: every column has weight 3, two columns share at most one
//! row, and each run of `m/3` consecutive columns (one parallel class)
//! covers every row exactly once.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SensingMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KirkmanParams {
    pub m: usize,
    pub c: usize,
}

impl KirkmanParams {
    pub fn new(m: usize, c: usize) -> Result<Self> {
        if m == 0 || m % 3 != 0 {
            return Err(Error::invalid(format!("Kirkman order must be a positive multiple of 3, got {m}")));
        }
        if c == 0 || 2 * c > m - 1 {
            return Err(Error::invalid(format!(
                "need 1 <= c <= (m-1)/2 parallel classes, got c={c} for m={m}"
            )));
        }
        Ok(Self { m, c })
    }

    pub fn block(&self) -> usize {
        self.m / 3
    }

    pub fn cols(&self) -> usize {
        self.block() * self.c
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KirkmanReport {
    pub ok: bool,
    pub violation: Option<String>,
}

pub fn verify_kirkman(mat: &SensingMatrix, params: KirkmanParams) -> Result<KirkmanReport> {
    if mat.rows() != params.m || mat.cols() != params.cols() {
        return Err(Error::invalid(format!(
            "expected a {}x{} matrix for m={}, c={}, got {}x{}",
            params.m,
            params.cols(),
            params.m,
            params.c,
            mat.rows(),
            mat.cols()
        )));
    }
    let fail = |msg: String| {
        Ok(KirkmanReport {
            ok: false,
            violation: Some(msg),
        })
    };
    if let Some(j) = mat.col_weights().iter().position(|&w| w != 3) {
        return fail(format!("column {j} has weight {}, expected 3", mat.col_weights()[j]));
    }
    let supports: Vec<Vec<usize>> = (0..mat.cols()).map(|j| mat.column_support(j)).collect();
    for a in 0..supports.len() {
        for b in a + 1..supports.len() {
            let shared = supports[a].iter().filter(|i| supports[b].contains(i)).count();
            if shared > 1 {
                return fail(format!("columns {a} and {b} share {shared} rows"));
            }
        }
    }
    let block = params.block();
    for class in 0..params.c {
        let mut cover = vec![0usize; params.m];
        for s in &supports[class * block..(class + 1) * block] {
            for &i in s {
                cover[i] += 1;
            }
        }
        if let Some(i) = cover.iter().position(|&v| v != 1) {
            return fail(format!(
                "parallel class {class} covers row {i} {} times",
                cover[i]
            ));
        }
    }
    Ok(KirkmanReport {
        ok: true,
        violation: None,
    })
}

const SUPPORTED_ORDERS: [usize; 3] = [3, 9, 15];
const NODE_BUDGET: usize = 200_000;
const RESTARTS: usize = 1_000;

/// Builds a Kirkman matrix by randomised backtracking over parallel classes.
pub fn construct_kirkman<R: Rng + ?Sized>(params: KirkmanParams, rng: &mut R) -> Result<SensingMatrix> {
    if !SUPPORTED_ORDERS.contains(&params.m) {
        return Err(Error::UnsupportedOrder { m: params.m });
    }
    for _ in 0..RESTARTS {
        let mut search = Search::new(params, rng);
        if search.run(rng) {
            return Ok(search.into_matrix());
        }
    }
    Err(Error::Construction(format!(
        "no Kirkman system found for m={}, c={} within the search budget",
        params.m, params.c
    )))
}

struct Search {
    params: KirkmanParams,
    /// `paired[p]` has bit `q` set once `{p, q}` sits in some triple.
    paired: Vec<u32>,
    classes: Vec<Vec<[usize; 3]>>,
    order: Vec<usize>,
    nodes: usize,
}

impl Search {
    fn new<R: Rng + ?Sized>(params: KirkmanParams, rng: &mut R) -> Self {
        let mut order: Vec<usize> = (0..params.m).collect();
        order.shuffle(rng);
        Self {
            params,
            paired: vec![0; params.m],
            classes: Vec::new(),
            order,
            nodes: 0,
        }
    }

    fn run<R: Rng + ?Sized>(&mut self, rng: &mut R) -> bool {
        self.classes.push(Vec::new());
        self.fill(0, rng)
    }

    /// Extends the current class; `used` marks points already placed in it.
    fn fill<R: Rng + ?Sized>(&mut self, used: u32, rng: &mut R) -> bool {
        self.nodes += 1;
        if self.nodes > NODE_BUDGET {
            return false;
        }
        let m = self.params.m;
        let full = (1u32 << m) - 1;
        if used == full {
            if self.classes.len() == self.params.c {
                return true;
            }
            self.classes.push(Vec::new());
            if self.fill(0, rng) {
                return true;
            }
            self.classes.pop();
            return false;
        }
        // The first free point (in a per-search random relabelling) must go
        // into some triple, which bounds the branching.
        let p = *self
            .order
            .iter()
            .find(|&&p| used & (1 << p) == 0)
            .expect("class not full");
        let mut partners: Vec<usize> = (0..m)
            .filter(|&q| q != p && used & (1 << q) == 0 && self.paired[p] & (1 << q) == 0)
            .collect();
        partners.shuffle(rng);
        for (a, &q) in partners.iter().enumerate() {
            for &r in &partners[a + 1..] {
                if self.paired[q] & (1 << r) != 0 {
                    continue;
                }
                self.place(p, q, r, true);
                self.classes.last_mut().unwrap().push([p, q, r]);
                let ok = self.fill(used | (1 << p) | (1 << q) | (1 << r), rng);
                if ok {
                    return true;
                }
                self.classes.last_mut().unwrap().pop();
                self.place(p, q, r, false);
                if self.nodes > NODE_BUDGET {
                    return false;
                }
            }
        }
        false
    }

    fn place(&mut self, p: usize, q: usize, r: usize, on: bool) {
        for (a, b) in [(p, q), (p, r), (q, r)] {
            if on {
                self.paired[a] |= 1 << b;
                self.paired[b] |= 1 << a;
            } else {
                self.paired[a] &= !(1 << b);
                self.paired[b] &= !(1 << a);
            }
        }
    }

    fn into_matrix(self) -> SensingMatrix {
        let m = self.params.m;
        let n = self.params.cols();
        let mut entries = vec![0u8; m * n];
        for (j, triple) in self.classes.iter().flatten().enumerate() {
            for &i in triple {
                entries[i * n + j] = 1;
            }
        }
        SensingMatrix::from_flat(m, n, entries).expect("Kirkman matrix has the declared shape")
    }
}

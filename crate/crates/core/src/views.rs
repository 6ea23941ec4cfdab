//! The three network views: the directed interaction graph (as an
//! out/in adjacency pair), the co-interaction graph and the fused
//! biochemical similarity graph, each with its degree-normalized
//! propagation matrix.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::numeric::SparseMatrix;

/// Default smoothing added to degrees inside the normalization square root.
pub const DEFAULT_SMOOTHING: f64 = 1e-8;

/// Directed drug interaction graph with stable external drug ids.
#[derive(Clone, Debug)]
pub struct DrugGraph {
    ids: Vec<String>,
    edges: Vec<(usize, usize)>,
    edge_set: HashSet<(usize, usize)>,
}

impl DrugGraph {
    pub fn new(ids: Vec<String>, edges: Vec<(usize, usize)>) -> Result<Self> {
        let n = ids.len();
        let mut edge_set = HashSet::with_capacity(edges.len());
        for &(u, v) in &edges {
            if u >= n || v >= n {
                return Err(Error::Construction(format!(
                    "edge ({u}, {v}) references a drug outside 0..{n}"
                )));
            }
            if u == v {
                return Err(Error::Construction(format!("self-loop on drug {u}")));
            }
            if !edge_set.insert((u, v)) {
                return Err(Error::Construction(format!("duplicate edge ({u}, {v})")));
            }
        }
        Ok(Self {
            ids,
            edges,
            edge_set,
        })
    }

    /// Graph over `n` drugs named by their index.
    pub fn with_indices(n: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        Self::new((0..n).map(|i| i.to_string()).collect(), edges)
    }

    pub fn n_drugs(&self) -> usize {
        self.ids.len()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, index: usize) -> &str {
        &self.ids[index]
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn contains(&self, u: usize, v: usize) -> bool {
        self.edge_set.contains(&(u, v))
    }

    /// Same drug set, different edges (e.g. a fold's training positives).
    pub fn with_edges(&self, edges: Vec<(usize, usize)>) -> Result<Self> {
        Self::new(self.ids.clone(), edges)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Family {
    Target,
    Enzyme,
    Transporter,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Target, Family::Enzyme, Family::Transporter];

    pub fn name(self) -> &'static str {
        match self {
            Family::Target => "target",
            Family::Enzyme => "enzyme",
            Family::Transporter => "transporter",
        }
    }

    pub fn parse(s: &str) -> Option<Family> {
        Family::ALL.into_iter().find(|f| f.name() == s)
    }

    fn slot(self) -> usize {
        self as usize
    }
}

/// Binary incidence of one feature family, stored as sorted item lists.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureFamily {
    pub items: Vec<String>,
    pub members: Vec<Vec<usize>>,
}

impl FeatureFamily {
    pub fn empty(n_drugs: usize) -> Self {
        Self {
            items: Vec::new(),
            members: vec![Vec::new(); n_drugs],
        }
    }

    pub fn width(&self) -> usize {
        self.items.len()
    }
}

/// Target, enzyme and transporter incidence vectors for every drug.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTable {
    families: [FeatureFamily; 3],
}

impl FeatureTable {
    /// Builds a table from per-family item lists; every inner list is sorted
    /// and deduplicated.
    pub fn new(families: [FeatureFamily; 3]) -> Result<Self> {
        let n = families[0].members.len();
        let mut families = families;
        for fam in &mut families {
            if fam.members.len() != n {
                return Err(Error::Construction(
                    "feature families cover different drug counts".into(),
                ));
            }
            let width = fam.items.len();
            for set in &mut fam.members {
                set.sort_unstable();
                set.dedup();
                if set.last().is_some_and(|&i| i >= width) {
                    return Err(Error::Construction("feature item index out of range".into()));
                }
            }
        }
        Ok(Self { families })
    }

    pub fn n_drugs(&self) -> usize {
        self.families[0].members.len()
    }

    pub fn family(&self, f: Family) -> &FeatureFamily {
        &self.families[f.slot()]
    }

    pub fn total_width(&self) -> usize {
        self.families.iter().map(FeatureFamily::width).sum()
    }

    /// Columnwise concatenation of the three binary families.
    pub fn dense_features(&self) -> crate::numeric::DenseMatrix {
        let n = self.n_drugs();
        let mut x = crate::numeric::DenseMatrix::zeros(n, self.total_width());
        let mut offset = 0;
        for fam in &self.families {
            for (d, set) in fam.members.iter().enumerate() {
                for &i in set {
                    x.set(d, offset + i, 1.0);
                }
            }
            offset += fam.width();
        }
        x
    }
}

/// `(A_out, A_in)` with `A_out[u][v] = 1` iff `⟨u,v⟩ ∈ E` and `A_in = A_outᵀ`.
pub fn build_adjacency(graph: &DrugGraph) -> (SparseMatrix, SparseMatrix) {
    let n = graph.n_drugs();
    let entries = graph.edges().iter().map(|&(u, v)| (u, v, 1.0)).collect();
    let a_out = SparseMatrix::from_triplets(n, n, entries).expect("graph edges are unique");
    let a_in = a_out.transpose();
    (a_out, a_in)
}

/// Degree-weighted co-interaction matrices `(C_in, C_out)`:
///
/// `C_in(i,j) = Σ_k A[k,i]·A[k,j] / Σ_v A[k,v]` links drugs that share a
/// source, `C_out(i,j) = Σ_k A[i,k]·A[j,k] / Σ_v A[v,k]` links drugs that
/// share a target. Diagonals are kept; [`ViewSet::build`] removes them.
pub fn build_co_interaction(a: &SparseMatrix) -> Result<(SparseMatrix, SparseMatrix)> {
    if !a.is_square() {
        return Err(Error::shape("build_co_interaction", "adjacency must be square"));
    }
    let c_in = shared_neighbor_matrix(a);
    let c_out = shared_neighbor_matrix(&a.transpose());
    Ok((c_in, c_out))
}

/// `Σ_k a[k,i]·a[k,j] / Σ_v a[k,v]` over rows `k` with nonzero sum.
fn shared_neighbor_matrix(a: &SparseMatrix) -> SparseMatrix {
    let n = a.cols();
    let mut entries = Vec::new();
    for k in 0..a.rows() {
        let row: Vec<(usize, f64)> = a.row(k).collect();
        let degree: f64 = row.iter().map(|e| e.1).sum();
        if degree == 0.0 {
            continue;
        }
        for &(i, wi) in &row {
            for &(j, wj) in &row {
                entries.push((i, j, wi * wj / degree));
            }
        }
    }
    SparseMatrix::from_triplets_summed(n, n, entries).expect("indices come from a valid matrix")
}

/// Jaccard similarity `|a ∩ b| / |a ∪ b|` of two sorted index sets; zero when
/// both are empty.
pub fn jaccard(a: &[usize], b: &[usize]) -> f64 {
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Fused similarity `B = B_t + B_e + B_p` with a zero diagonal.
pub fn build_similarity(features: &FeatureTable) -> SparseMatrix {
    let n = features.n_drugs();
    let mut entries = Vec::new();
    for fam in Family::ALL.map(|f| features.family(f)) {
        // drugs sharing at least one item are the only nonzero pairs
        let mut holders: Vec<Vec<usize>> = vec![Vec::new(); fam.width()];
        for (d, set) in fam.members.iter().enumerate() {
            for &item in set {
                holders[item].push(d);
            }
        }
        let mut pairs: Vec<(usize, usize)> = holders
            .iter()
            .flat_map(|h| {
                h.iter()
                    .flat_map(move |&u| h.iter().filter(move |&&v| v != u).map(move |&v| (u, v)))
            })
            .collect();
        pairs.sort_unstable();
        pairs.dedup();
        for (u, v) in pairs {
            entries.push((u, v, jaccard(&fam.members[u], &fam.members[v])));
        }
    }
    SparseMatrix::from_triplets_summed(n, n, entries).expect("pairs are in range")
}

/// Scales entry `(i, j)` by `1 / sqrt((r_i + ε)(c_j + ε))` with row sums `r`
/// and column sums `c`.
pub fn normalize(m: &SparseMatrix, smoothing: f64) -> Result<SparseMatrix> {
    if !m.is_square() {
        return Err(Error::Construction("normalize expects a square matrix".into()));
    }
    if let Some(w) = m.values().iter().find(|&&w| w < 0.0) {
        return Err(Error::Construction(format!(
            "normalize expects non-negative weights, found {w}"
        )));
    }
    let rows = m.row_sums();
    let cols = m.col_sums();
    Ok(m.map_entries(|i, j, w| w / ((rows[i] + smoothing) * (cols[j] + smoothing)).sqrt()))
}

/// Which graph a [`ViewSet`] was built from.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewMeta {
    pub smoothing: f64,
    pub source: String,
    pub edge_count: usize,
    pub symmetric: bool,
}

/// The five normalized propagation matrices, plus the unnormalized
/// adjacency they were derived from.
#[derive(Clone, Debug)]
pub struct ViewSet {
    pub a_out: SparseMatrix,
    pub a_in: SparseMatrix,
    pub c_out: SparseMatrix,
    pub c_in: SparseMatrix,
    /// Absent when no feature table is available.
    pub sim: Option<SparseMatrix>,
    pub raw_out: SparseMatrix,
    pub meta: ViewMeta,
}

impl ViewSet {
    /// Builds every view from `graph`, which must contain training edges only.
    pub fn build(
        graph: &DrugGraph,
        features: Option<&FeatureTable>,
        smoothing: f64,
        source: impl Into<String>,
    ) -> Result<Self> {
        let (a_out, a_in) = build_adjacency(graph);
        let (c_in, c_out) = build_co_interaction(&a_out)?;
        let sim = features.map(build_similarity);
        Ok(Self {
            a_out: normalize(&a_out, smoothing)?,
            a_in: normalize(&a_in, smoothing)?,
            c_out: normalize(&c_out.without_diagonal(), smoothing)?,
            c_in: normalize(&c_in.without_diagonal(), smoothing)?,
            sim: sim.map(|b| normalize(&b, smoothing)).transpose()?,
            raw_out: a_out,
            meta: ViewMeta {
                smoothing,
                source: source.into(),
                edge_count: graph.n_edges(),
                symmetric: false,
            },
        })
    }

    /// Direction-blind variant: both interaction views propagate over
    /// `A ∨ Aᵀ` and both co-interaction views over `C_in + C_out`.
    pub fn build_symmetric(
        graph: &DrugGraph,
        features: Option<&FeatureTable>,
        smoothing: f64,
        source: impl Into<String>,
    ) -> Result<Self> {
        let n = graph.n_drugs();
        let (a_out, _) = build_adjacency(graph);
        let undirected: Vec<(usize, usize, f64)> = {
            let mut set: Vec<(usize, usize)> = graph
                .edges()
                .iter()
                .flat_map(|&(u, v)| [(u, v), (v, u)])
                .collect();
            set.sort_unstable();
            set.dedup();
            set.into_iter().map(|(u, v)| (u, v, 1.0)).collect()
        };
        let a_sym = normalize(&SparseMatrix::from_triplets(n, n, undirected)?, smoothing)?;
        let (c_in, c_out) = build_co_interaction(&a_out)?;
        let merged: Vec<(usize, usize, f64)> = c_in.iter().chain(c_out.iter()).collect();
        let c_sym = SparseMatrix::from_triplets_summed(n, n, merged)?.without_diagonal();
        let c_sym = normalize(&c_sym, smoothing)?;
        let sim = features.map(build_similarity);
        Ok(Self {
            a_in: a_sym.clone(),
            a_out: a_sym,
            c_in: c_sym.clone(),
            c_out: c_sym,
            sim: sim.map(|b| normalize(&b, smoothing)).transpose()?,
            raw_out: a_out,
            meta: ViewMeta {
                smoothing,
                source: source.into(),
                edge_count: graph.n_edges(),
                symmetric: true,
            },
        })
    }

    pub fn n_drugs(&self) -> usize {
        self.a_out.rows()
    }

    /// Fails if any of `held_out` is present in the adjacency the views were
    /// built from.
    pub fn assert_excludes(&self, held_out: &[(usize, usize)]) -> Result<()> {
        match held_out.iter().find(|&&(u, v)| self.raw_out.get(u, v) != 0.0) {
            Some(&(u, v)) => Err(Error::Construction(format!(
                "held-out edge ({u}, {v}) leaked into the training views"
            ))),
            None => Ok(()),
        }
    }

    /// `(name, matrix)` for every available view, in encoder order.
    pub fn named(&self) -> Vec<(&'static str, &SparseMatrix)> {
        let mut out = vec![
            ("A_out", &self.a_out),
            ("A_in", &self.a_in),
            ("C_out", &self.c_out),
            ("C_in", &self.c_in),
        ];
        if let Some(b) = &self.sim {
            out.push(("B", b));
        }
        out
    }
}

//! Interconnection model: a directed graph of contract-bearing nodes plus
//! the wiring matrices that realize it.
//!
//! Each node `i` carries a contract with input `d_i` and output `y_i`. The
//! input is assembled from the other nodes' outputs and the stacked
//! external input (each node contributes a slice of `d_ext`, but `E[i]`
//! maps the full vector, so externals may be shared between nodes):
//!
//! ```text
//! d_i(k) = sum_j F[i][j] * y_j(k) + E[i] * d_ext(k)
//! ```
//!
//! and the composite output is `y_ext(k) = sum_{i in W} H[i] * y_i(k)` over
//! the output set `W`. An edge `j -> i` exists exactly when `y_j` feeds
//! `d_i`; it is *strictly causal* when the downstream contract's guarantees
//! never read the fed coordinates at the current time (no feedthrough), so
//! cycles of non-strictly-causal edges are the algebraic loops the
//! verification layer must reject.
//!
//! A [`Network`] is immutable once built; all queries are pure.

use crate::contracts::ContractRef;
use crate::mat::Mat;
use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use thiserror::Error;

pub type NodeId = usize;

/// Default node bound for the exponential ordering counter.
pub const DEFAULT_ORDER_COUNT_BOUND: usize = 12;

#[derive(Clone, Debug)]
pub struct Node {
    pub name: String,
    pub contract: ContractRef,
    /// Width of this node's slice of the external input (may be 0).
    pub n_d_ext: usize,
}

/// Causality label of an edge `src -> dst`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Causality {
    Strict,
    NonStrict,
}

/// Edge labels, keyed `(src, dst)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CausalityLabeling {
    labels: BTreeMap<(NodeId, NodeId), Causality>,
}

impl CausalityLabeling {
    pub fn get(&self, src: NodeId, dst: NodeId) -> Option<Causality> {
        self.labels.get(&(src, dst)).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(NodeId, NodeId), &Causality)> {
        self.labels.iter()
    }

    pub fn is_strict(&self, src: NodeId, dst: NodeId) -> bool {
        self.get(src, dst) == Some(Causality::Strict)
    }
}

/// Which edges a reachability query may traverse.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeFilter {
    All,
    /// Only edges labeled non-strictly causal (the `G_nsc` subgraph).
    NonStrictOnly,
}

/// Witness for "this graph is not a DAG": a closed walk of edges.
#[derive(Clone, Debug, PartialEq)]
pub struct CycleCertificate {
    pub edges: Vec<(NodeId, NodeId)>,
}

/// Structural findings from the composition well-posedness checks.
#[derive(Clone, Debug, PartialEq)]
pub enum Finding {
    /// A cycle of non-strictly-causal edges: the composition has an
    /// algebraic loop and the verification theorems do not apply.
    AlgebraicLoop { cycle: Vec<(NodeId, NodeId)> },
    /// Conservative check: node `i` is not an output node, has an external
    /// input, and its assumptions read its own output. The composite
    /// assumptions would then reference an internal variable.
    OutputDependentAssumption { node: NodeId },
}

/// One source segment of a node's stacked input vector.
#[derive(Clone, Debug, PartialEq)]
pub enum InputSource {
    /// The next `n` coordinates of this node's own external input slice.
    External(usize),
    /// `len` coordinates of the stacked external input starting at an
    /// absolute offset (for inputs shared between nodes).
    ExternalAt { offset: usize, len: usize },
    /// The full output vector of another node.
    NodeOutput(NodeId),
}

#[derive(Clone, Debug)]
pub struct Network {
    nodes: Vec<Node>,
    edges: Vec<(NodeId, NodeId)>,
    /// Keyed `(dst, src)`; `n_d_dst x n_y_src`.
    f: BTreeMap<(NodeId, NodeId), Mat>,
    e: Vec<Mat>,
    h: Vec<Option<Mat>>,
    output_set: BTreeSet<NodeId>,
    n_y_ext: usize,
    causality: CausalityLabeling,
    ext_offsets: Vec<usize>,
    n_d_ext_total: usize,
    /// Predecessors per node, sorted, derived from `edges`.
    preds: Vec<Vec<NodeId>>,
    succs: Vec<Vec<NodeId>>,
}

impl Network {
    pub fn builder() -> NetworkBuilder {
        NetworkBuilder::default()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, i: NodeId) -> &Node {
        &self.nodes[i]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node_by_name(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().position(|n| n.name == name)
    }

    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.edges
    }

    pub fn predecessors(&self, i: NodeId) -> &[NodeId] {
        &self.preds[i]
    }

    pub fn f(&self, dst: NodeId, src: NodeId) -> Option<&Mat> {
        self.f.get(&(dst, src))
    }

    pub fn e(&self, i: NodeId) -> &Mat {
        &self.e[i]
    }

    pub fn h(&self, i: NodeId) -> Option<&Mat> {
        self.h[i].as_ref()
    }

    pub fn output_set(&self) -> &BTreeSet<NodeId> {
        &self.output_set
    }

    pub fn n_y_ext(&self) -> usize {
        self.n_y_ext
    }

    /// Offset of node `i`'s slice within the stacked external input.
    pub fn ext_offset(&self, i: NodeId) -> usize {
        self.ext_offsets[i]
    }

    pub fn n_d_ext_total(&self) -> usize {
        self.n_d_ext_total
    }

    /// Effective edge labels: derived causality possibly relaxed by user
    /// overrides (never tightened).
    pub fn causality(&self) -> &CausalityLabeling {
        &self.causality
    }

    fn filtered_preds(&self, i: NodeId, filter: EdgeFilter) -> Vec<NodeId> {
        self.preds[i]
            .iter()
            .copied()
            .filter(|&j| match filter {
                EdgeFilter::All => true,
                EdgeFilter::NonStrictOnly => !self.causality.is_strict(j, i),
            })
            .collect()
    }

    /// Nodes `j` with a nonempty directed path `j -> ... -> i` through
    /// edges passing the filter. `i` itself belongs to the set exactly when
    /// it lies on a cycle of such edges.
    pub fn backward_reachable(&self, i: NodeId, filter: EdgeFilter) -> BTreeSet<NodeId> {
        let mut seen = BTreeSet::new();
        let mut queue: VecDeque<NodeId> = self.filtered_preds(i, filter).into();
        while let Some(v) = queue.pop_front() {
            if seen.insert(v) {
                queue.extend(self.filtered_preds(v, filter));
            }
        }
        seen
    }

    /// `BR(i)` together with `i` itself.
    pub fn backward_reachable_plus(&self, i: NodeId, filter: EdgeFilter) -> BTreeSet<NodeId> {
        let mut s = self.backward_reachable(i, filter);
        s.insert(i);
        s
    }

    /// Depth-first topological ordering with node-index tie-breaking, or a
    /// cycle certificate. Deterministic for a given network.
    pub fn topological_order(&self) -> Result<Vec<NodeId>, CycleCertificate> {
        self.topological_order_filtered(EdgeFilter::All)
    }

    fn topological_order_filtered(
        &self,
        filter: EdgeFilter,
    ) -> Result<Vec<NodeId>, CycleCertificate> {
        let n = self.nodes.len();
        let succs: Vec<Vec<NodeId>> = (0..n)
            .map(|v| {
                self.succs[v]
                    .iter()
                    .copied()
                    .filter(|&w| match filter {
                        EdgeFilter::All => true,
                        EdgeFilter::NonStrictOnly => !self.causality.is_strict(v, w),
                    })
                    .collect()
            })
            .collect();

        const WHITE: u8 = 0;
        const GRAY: u8 = 1;
        const BLACK: u8 = 2;
        let mut color = vec![WHITE; n];
        let mut order = Vec::with_capacity(n);

        for root in 0..n {
            if color[root] != WHITE {
                continue;
            }
            // Stack entries: (node, index of the next successor to visit).
            let mut stack: Vec<(NodeId, usize)> = vec![(root, 0)];
            color[root] = GRAY;
            while let Some(&(v, next)) = stack.last() {
                if next < succs[v].len() {
                    stack.last_mut().expect("nonempty").1 += 1;
                    let w = succs[v][next];
                    match color[w] {
                        WHITE => {
                            color[w] = GRAY;
                            stack.push((w, 0));
                        }
                        GRAY => {
                            // Back edge: the gray stack from w to v plus
                            // (v, w) closes a cycle.
                            let pos = stack
                                .iter()
                                .position(|&(u, _)| u == w)
                                .expect("gray node on stack");
                            let mut cycle: Vec<(NodeId, NodeId)> =
                                stack[pos..].windows(2).map(|p| (p[0].0, p[1].0)).collect();
                            cycle.push((v, w));
                            return Err(CycleCertificate { edges: cycle });
                        }
                        _ => {}
                    }
                } else {
                    color[v] = BLACK;
                    order.push(v);
                    stack.pop();
                }
            }
        }
        order.reverse();
        Ok(order)
    }

    pub fn is_dag(&self) -> bool {
        self.topological_order().is_ok()
    }

    /// Exact number of distinct topological orderings (0 for cyclic
    /// graphs). Exponential bitmask enumeration, guarded by `bound`.
    pub fn count_topological_orders(&self, bound: usize) -> Result<u64, NetworkError> {
        let n = self.nodes.len();
        if n > bound || n > 63 {
            return Err(NetworkError::OrderCountBound { nodes: n, bound });
        }
        let mut pred_mask = vec![0u64; n];
        for &(s, d) in &self.edges {
            pred_mask[d] |= 1 << s;
        }
        let full: u64 = if n == 64 { u64::MAX } else { (1 << n) - 1 };
        let mut memo: HashMap<u64, u64> = HashMap::new();

        fn go(mask: u64, pred_mask: &[u64], memo: &mut HashMap<u64, u64>) -> u64 {
            if mask == 0 {
                return 1;
            }
            if let Some(&v) = memo.get(&mask) {
                return v;
            }
            let mut total = 0u64;
            for v in 0..pred_mask.len() {
                let bit = 1u64 << v;
                if mask & bit != 0 && pred_mask[v] & mask == 0 {
                    total += go(mask & !bit, pred_mask, memo);
                }
            }
            memo.insert(mask, total);
            total
        }
        Ok(go(full, &pred_mask, &mut memo))
    }

    /// Labels each edge `src -> dst` strictly causal iff
    /// `Gd0(C_dst) * F[dst][src]` is the zero matrix, i.e. the downstream
    /// guarantees have no current-time dependence on the fed coordinates.
    pub fn derive_edge_causality(&self) -> CausalityLabeling {
        let mut labels = BTreeMap::new();
        for &(src, dst) in &self.edges {
            let gd0 = self.nodes[dst].contract.guarantee_current_d();
            let strict = match self.f.get(&(dst, src)) {
                Some(f) => gd0.matmul(f).is_zero(),
                None => true,
            };
            labels.insert(
                (src, dst),
                if strict {
                    Causality::Strict
                } else {
                    Causality::NonStrict
                },
            );
        }
        CausalityLabeling { labels }
    }

    /// Structural checks backing the composition theorems: returns an
    /// algebraic-loop finding when the non-strictly-causal subgraph has a
    /// cycle, and a conservative finding for every non-output node whose
    /// assumptions read its own output while an external input is present.
    /// An empty list means both checks pass.
    pub fn check_assumptions(&self) -> Vec<Finding> {
        let mut findings = Vec::new();
        if let Err(cycle) = self.topological_order_filtered(EdgeFilter::NonStrictOnly) {
            findings.push(Finding::AlgebraicLoop { cycle: cycle.edges });
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if self.output_set.contains(&i) {
                continue;
            }
            let has_ext = !self.e[i].is_zero();
            let reads_own_output = node
                .contract
                .assumptions()
                .iter()
                .any(|b| !b.coeff_y().is_zero());
            if has_ext && reads_own_output {
                findings.push(Finding::OutputDependentAssumption { node: i });
            }
        }
        findings
    }
}

#[derive(Default)]
pub struct NetworkBuilder {
    nodes: Vec<Node>,
    edges: Vec<(NodeId, NodeId)>,
    f: BTreeMap<(NodeId, NodeId), Mat>,
    e: BTreeMap<NodeId, Mat>,
    h: BTreeMap<NodeId, Mat>,
    stacked: BTreeMap<NodeId, Vec<InputSource>>,
    output_set: BTreeSet<NodeId>,
    n_y_ext: Option<usize>,
    overrides: BTreeMap<(NodeId, NodeId), Causality>,
}

impl NetworkBuilder {
    pub fn add_node(
        &mut self,
        name: impl Into<String>,
        contract: ContractRef,
        n_d_ext: usize,
    ) -> NodeId {
        self.nodes.push(Node {
            name: name.into(),
            contract,
            n_d_ext,
        });
        self.nodes.len() - 1
    }

    pub fn add_edge(&mut self, src: NodeId, dst: NodeId) -> &mut Self {
        self.edges.push((src, dst));
        self
    }

    /// Declares an edge together with a user causality label. Labels may
    /// only relax (a derived-strict edge may be declared non-strict, which
    /// shortens premise windows and is sound; the reverse is rejected at
    /// build time).
    pub fn add_edge_labeled(&mut self, src: NodeId, dst: NodeId, label: Causality) -> &mut Self {
        self.edges.push((src, dst));
        self.overrides.insert((src, dst), label);
        self
    }

    pub fn set_f(&mut self, dst: NodeId, src: NodeId, f: Mat) -> &mut Self {
        self.f.insert((dst, src), f);
        self
    }

    pub fn set_e(&mut self, node: NodeId, e: Mat) -> &mut Self {
        self.e.insert(node, e);
        self
    }

    pub fn set_h(&mut self, node: NodeId, h: Mat) -> &mut Self {
        self.h.insert(node, h);
        self
    }

    pub fn add_output(&mut self, node: NodeId) -> &mut Self {
        self.output_set.insert(node);
        self
    }

    pub fn set_n_y_ext(&mut self, n: usize) -> &mut Self {
        self.n_y_ext = Some(n);
        self
    }

    /// Declares a node's input vector as the stack of the given sources,
    /// in order. Selection-style `E`/`F` matrices (and the edges for node
    /// sources) are generated at build time, once the stacked external
    /// layout is final.
    pub fn stack_inputs(
        &mut self,
        node: NodeId,
        sources: &[InputSource],
    ) -> Result<&mut Self, NetworkError> {
        if node >= self.nodes.len() {
            return Err(NetworkError::UnknownNode { id: node });
        }
        for s in sources {
            if let InputSource::NodeOutput(j) = *s {
                if j >= self.nodes.len() {
                    return Err(NetworkError::UnknownNode { id: j });
                }
            }
        }
        self.stacked.insert(node, sources.to_vec());
        Ok(self)
    }

    fn materialize_stacked(
        &mut self,
        ext_offsets: &[usize],
        n_d_ext_total: usize,
    ) -> Result<(), NetworkError> {
        let stacked = std::mem::take(&mut self.stacked);
        for (node, sources) in stacked {
            let n_d = self.nodes[node].contract.n_d();
            let mut e = Mat::zeros(n_d, n_d_ext_total);
            let mut f: BTreeMap<NodeId, Mat> = BTreeMap::new();
            let mut row = 0usize;
            let mut own_used = 0usize;
            for s in &sources {
                let (offset, len) = match *s {
                    InputSource::External(w) => {
                        let o = ext_offsets[node] + own_used;
                        own_used += w;
                        if own_used > self.nodes[node].n_d_ext {
                            return Err(NetworkError::StackShape {
                                node,
                                want: n_d,
                                got: row + w,
                            });
                        }
                        (o, w)
                    }
                    InputSource::ExternalAt { offset, len } => (offset, len),
                    InputSource::NodeOutput(j) => {
                        let n_y_j = self.nodes[j].contract.n_y();
                        if row + n_y_j > n_d {
                            return Err(NetworkError::StackShape {
                                node,
                                want: n_d,
                                got: row + n_y_j,
                            });
                        }
                        let fj = f.entry(j).or_insert_with(|| Mat::zeros(n_d, n_y_j));
                        for c in 0..n_y_j {
                            fj.set(row + c, c, 1.0);
                        }
                        row += n_y_j;
                        continue;
                    }
                };
                if row + len > n_d || offset + len > n_d_ext_total {
                    return Err(NetworkError::StackShape {
                        node,
                        want: n_d,
                        got: row + len,
                    });
                }
                for c in 0..len {
                    e.set(row + c, offset + c, 1.0);
                }
                row += len;
            }
            if row != n_d {
                return Err(NetworkError::StackShape {
                    node,
                    want: n_d,
                    got: row,
                });
            }
            self.e.insert(node, e);
            for (j, fj) in f {
                if !self.edges.contains(&(j, node)) {
                    self.edges.push((j, node));
                }
                self.f.insert((node, j), fj);
            }
        }
        Ok(())
    }

    /// Declares the output set as the ordered stack of the given nodes'
    /// full outputs and generates the selection `H` matrices.
    pub fn stack_outputs(&mut self, nodes_in_order: &[NodeId]) -> Result<&mut Self, NetworkError> {
        let n_y_ext: usize = nodes_in_order
            .iter()
            .map(|&i| self.nodes.get(i).map(|n| n.contract.n_y()).unwrap_or(0))
            .sum();
        let mut offset = 0usize;
        for &i in nodes_in_order {
            if i >= self.nodes.len() {
                return Err(NetworkError::UnknownNode { id: i });
            }
            let n_y = self.nodes[i].contract.n_y();
            let mut h = Mat::zeros(n_y_ext, n_y);
            for c in 0..n_y {
                h.set(offset + c, c, 1.0);
            }
            offset += n_y;
            self.h.insert(i, h);
            self.output_set.insert(i);
        }
        self.n_y_ext = Some(n_y_ext);
        Ok(self)
    }

    pub fn build(mut self) -> Result<Network, NetworkError> {
        let n = self.nodes.len();
        if n == 0 {
            return Err(NetworkError::Empty);
        }
        let mut names = BTreeSet::new();
        for node in &self.nodes {
            if !names.insert(node.name.clone()) {
                return Err(NetworkError::DuplicateName {
                    name: node.name.clone(),
                });
            }
        }

        let mut ext_offsets = Vec::with_capacity(n);
        let mut total = 0usize;
        for node in &self.nodes {
            ext_offsets.push(total);
            total += node.n_d_ext;
        }
        self.materialize_stacked(&ext_offsets, total)?;

        let mut seen_edges = BTreeSet::new();
        for &(s, d) in &self.edges {
            if s >= n || d >= n {
                return Err(NetworkError::UnknownNode { id: s.max(d) });
            }
            if !seen_edges.insert((s, d)) {
                return Err(NetworkError::DuplicateEdge { src: s, dst: d });
            }
        }

        // Wiring shapes.
        for (&(dst, src), f) in &self.f {
            if !seen_edges.contains(&(src, dst)) {
                return Err(NetworkError::WiringWithoutEdge { src, dst });
            }
            let (want_r, want_c) = (
                self.nodes[dst].contract.n_d(),
                self.nodes[src].contract.n_y(),
            );
            if f.rows() != want_r || f.cols() != want_c {
                return Err(NetworkError::MatrixShape {
                    what: format!("F[{dst}][{src}]"),
                    want: (want_r, want_c),
                    got: (f.rows(), f.cols()),
                });
            }
        }
        // E maps the full stacked external input (inputs may be shared
        // between nodes).
        let mut e_mats = Vec::with_capacity(n);
        for (i, node) in self.nodes.iter().enumerate() {
            let e = self
                .e
                .remove(&i)
                .unwrap_or_else(|| Mat::zeros(node.contract.n_d(), total));
            if e.rows() != node.contract.n_d() || e.cols() != total {
                return Err(NetworkError::MatrixShape {
                    what: format!("E[{i}]"),
                    want: (node.contract.n_d(), total),
                    got: (e.rows(), e.cols()),
                });
            }
            e_mats.push(e);
        }

        let n_y_ext = match self.n_y_ext {
            Some(v) => v,
            None => match self.h.values().next() {
                Some(h) => h.rows(),
                None => return Err(NetworkError::MissingExternalOutput),
            },
        };
        if n_y_ext == 0 {
            return Err(NetworkError::MissingExternalOutput);
        }
        let mut h_mats: Vec<Option<Mat>> = vec![None; n];
        for (i, h) in self.h {
            if h.rows() != n_y_ext || h.cols() != self.nodes[i].contract.n_y() {
                return Err(NetworkError::MatrixShape {
                    what: format!("H[{i}]"),
                    want: (n_y_ext, self.nodes[i].contract.n_y()),
                    got: (h.rows(), h.cols()),
                });
            }
            if !h.is_zero() && !self.output_set.contains(&i) {
                return Err(NetworkError::OutputWiringOutsideW { node: i });
            }
            h_mats[i] = Some(h);
        }

        // Every input coordinate must be sourced somewhere.
        for i in 0..n {
            let n_d = self.nodes[i].contract.n_d();
            'coord: for c in 0..n_d {
                if e_mats[i].row(c).iter().any(|&v| v != 0.0) {
                    continue 'coord;
                }
                for (&(dst, _), f) in self.f.iter() {
                    if dst == i && f.row(c).iter().any(|&v| v != 0.0) {
                        continue 'coord;
                    }
                }
                return Err(NetworkError::DanglingInput { node: i, coord: c });
            }
        }

        let mut preds: Vec<Vec<NodeId>> = vec![Vec::new(); n];
        let mut succs: Vec<Vec<NodeId>> = vec![Vec::new(); n];
        for &(s, d) in &self.edges {
            preds[d].push(s);
            succs[s].push(d);
        }
        for p in &mut preds {
            p.sort_unstable();
        }
        for s in &mut succs {
            s.sort_unstable();
        }

        let mut network = Network {
            nodes: self.nodes,
            edges: self.edges,
            f: self.f,
            e: e_mats,
            h: h_mats,
            output_set: self.output_set,
            n_y_ext,
            causality: CausalityLabeling::default(),
            ext_offsets,
            n_d_ext_total: total,
            preds,
            succs,
        };

        // Effective causality: derived labels, relaxed by overrides.
        let mut labeling = network.derive_edge_causality();
        for ((src, dst), user) in self.overrides {
            let derived = labeling.labels[&(src, dst)];
            match (derived, user) {
                (Causality::NonStrict, Causality::Strict) => {
                    return Err(NetworkError::UnsoundCausalityOverride { src, dst });
                }
                _ => {
                    labeling.labels.insert((src, dst), user);
                }
            }
        }
        network.causality = labeling;
        Ok(network)
    }
}

#[derive(Debug, Clone, Error)]
pub enum NetworkError {
    #[error("network has no nodes")]
    Empty,
    #[error("duplicate node name {name:?}")]
    DuplicateName { name: String },
    #[error("unknown node id {id}")]
    UnknownNode { id: NodeId },
    #[error("duplicate edge {src} -> {dst}")]
    DuplicateEdge { src: NodeId, dst: NodeId },
    #[error("wiring matrix given for nonexistent edge {src} -> {dst}")]
    WiringWithoutEdge { src: NodeId, dst: NodeId },
    #[error("{what} has shape {got:?}, expected {want:?}")]
    MatrixShape {
        what: String,
        want: (usize, usize),
        got: (usize, usize),
    },
    #[error("node {node} input coordinate {coord} is sourced by neither E nor any F")]
    DanglingInput { node: NodeId, coord: usize },
    #[error("node {node} has output wiring H but is not in the output set")]
    OutputWiringOutsideW { node: NodeId },
    #[error("stacked input spec for node {node} covers {got} coordinates, contract needs {want}")]
    StackShape {
        node: NodeId,
        want: usize,
        got: usize,
    },
    #[error("edge {src} -> {dst} derives non-strictly causal; declaring it strict is unsound")]
    UnsoundCausalityOverride { src: NodeId, dst: NodeId },
    #[error("external output dimension unknown: no H wiring and no explicit n_y_ext")]
    MissingExternalOutput,
    #[error("{nodes} nodes exceed the ordering-count bound {bound}")]
    OrderCountBound { nodes: usize, bound: usize },
}

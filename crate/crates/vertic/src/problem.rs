//! The JSON problem-file format: contracts, network, system contract and
//! options in one document.
//!
//! Matrices are dense row-major arrays. Wiring can be given as raw `F`/
//! `E`/`H` matrices or through the `stack` shorthand, which builds the
//! selection matrices from ordered source lists (`{"ext": n}` for the
//! node's own external slice, `{"ext_at": [offset, len]}` for shared
//! external coordinates, `{"node": "<id>"}` for another node's full
//! output). Parsing reports every failure with a JSON-pointer-style path.
//!
//! Serialization always emits the canonical dense form with the effective
//! causality labels spelled out, so `serialize(parse(file))` is
//! semantically identical to the input with matrices bit-equal.

use crate::contracts::{ContractRef, InequalityBlock, LtiRdContract};
use crate::mat::Mat;
use crate::network::{Causality, InputSource, Network, NodeId};
use crate::simplex::SimplexOptions;
use crate::verification::{Mode, VerificationProblem, VerifyOptions};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;
use thiserror::Error;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ProblemFile {
    pub contracts: BTreeMap<String, ContractSpec>,
    pub network: NetworkSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_tot: Option<CtotSpec>,
    #[serde(default)]
    pub options: OptionsSpec,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ContractSpec {
    pub n_d: usize,
    pub n_y: usize,
    #[serde(default)]
    pub assumption_blocks: Vec<BlockSpec>,
    #[serde(default)]
    pub guarantee_blocks: Vec<BlockSpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct BlockSpec {
    pub depth: usize,
    pub coeff_d: Vec<Vec<f64>>,
    pub coeff_y: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct NetworkSpec {
    pub nodes: Vec<NodeSpec>,
    #[serde(default)]
    pub edges: Vec<EdgeSpec>,
    #[serde(default)]
    pub wiring: WiringSpec,
    #[serde(default)]
    pub output_set: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_y_ext: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct NodeSpec {
    pub id: String,
    pub contract: String,
    #[serde(default)]
    pub n_d_ext: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct EdgeSpec {
    pub src: String,
    pub dst: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub causality: Option<CausalitySpec>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum CausalitySpec {
    Strict,
    Nonstrict,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct WiringSpec {
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub stack: BTreeMap<String, Vec<StackItemSpec>>,
    #[serde(default, skip_serializing_if = "DenseWiringSpec::is_empty")]
    pub dense: DenseWiringSpec,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum StackItemSpec {
    Ext { ext: usize },
    ExtAt { ext_at: (usize, usize) },
    Node { node: String },
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct DenseWiringSpec {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub f: Vec<FEntrySpec>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub e: BTreeMap<String, Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub h: BTreeMap<String, Vec<Vec<f64>>>,
}

impl DenseWiringSpec {
    fn is_empty(&self) -> bool {
        self.f.is_empty() && self.e.is_empty() && self.h.is_empty()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FEntrySpec {
    pub src: String,
    pub dst: String,
    pub matrix: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum CtotSpec {
    Label(String),
    Inline(ContractSpec),
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct OptionsSpec {
    pub tolerance: f64,
    pub mode: Mode,
    pub horizon_extension: usize,
    pub extendibility_asserted: bool,
    pub strict_assumption_check: bool,
}

impl Default for OptionsSpec {
    fn default() -> Self {
        OptionsSpec {
            tolerance: 1e-6,
            mode: Mode::General,
            horizon_extension: 0,
            extendibility_asserted: false,
            strict_assumption_check: false,
        }
    }
}

#[derive(Debug, Clone, Error)]
#[error("{pointer}: {msg}")]
pub struct ProblemError {
    pub pointer: String,
    pub msg: String,
}

fn err(pointer: impl Into<String>, msg: impl std::fmt::Display) -> ProblemError {
    ProblemError {
        pointer: pointer.into(),
        msg: msg.to_string(),
    }
}

impl ProblemFile {
    /// Parses a document, reporting schema violations with JSON-pointer
    /// paths.
    pub fn parse(text: &str) -> Result<Self, ProblemError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let pointer = if path == "." {
                "/".to_string()
            } else {
                format!(
                    "/{}",
                    path.replace('[', ".").replace(']', "").replace('.', "/")
                )
            };
            err(pointer, e.inner())
        })
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem files always serialize")
    }

    fn contract(&self, label: &str, pointer: &str) -> Result<ContractRef, ProblemError> {
        let spec = self
            .contracts
            .get(label)
            .ok_or_else(|| err(pointer, format!("unknown contract label {label:?}")))?;
        build_contract(label, spec)
    }

    /// Builds just the interconnection (usable without a system contract,
    /// e.g. for graph diagnostics).
    pub fn build_network(&self) -> Result<Network, ProblemError> {
        let mut b = Network::builder();
        let mut ids: BTreeMap<String, NodeId> = BTreeMap::new();
        for (i, node) in self.network.nodes.iter().enumerate() {
            let pointer = format!("/network/nodes/{i}");
            let contract = self.contract(&node.contract, &format!("{pointer}/contract"))?;
            let id = b.add_node(node.id.clone(), contract, node.n_d_ext);
            if ids.insert(node.id.clone(), id).is_some() {
                return Err(err(
                    format!("{pointer}/id"),
                    format!("duplicate node id {:?}", node.id),
                ));
            }
        }
        let resolve = |name: &str, pointer: String| -> Result<NodeId, ProblemError> {
            ids.get(name)
                .copied()
                .ok_or_else(|| err(pointer, format!("unknown node id {name:?}")))
        };

        for (i, edge) in self.network.edges.iter().enumerate() {
            let pointer = format!("/network/edges/{i}");
            let src = resolve(&edge.src, format!("{pointer}/src"))?;
            let dst = resolve(&edge.dst, format!("{pointer}/dst"))?;
            match edge.causality {
                None => b.add_edge(src, dst),
                Some(CausalitySpec::Strict) => b.add_edge_labeled(src, dst, Causality::Strict),
                Some(CausalitySpec::Nonstrict) => {
                    b.add_edge_labeled(src, dst, Causality::NonStrict)
                }
            };
        }

        for (name, items) in &self.network.wiring.stack {
            let pointer = format!("/network/wiring/stack/{name}");
            let node = resolve(name, pointer.clone())?;
            let mut sources = Vec::with_capacity(items.len());
            for (i, item) in items.iter().enumerate() {
                sources.push(match item {
                    StackItemSpec::Ext { ext } => InputSource::External(*ext),
                    StackItemSpec::ExtAt { ext_at } => InputSource::ExternalAt {
                        offset: ext_at.0,
                        len: ext_at.1,
                    },
                    StackItemSpec::Node { node } => {
                        InputSource::NodeOutput(resolve(node, format!("{pointer}/{i}/node"))?)
                    }
                });
            }
            b.stack_inputs(node, &sources)
                .map_err(|e| err(pointer, e))?;
        }

        let dense = &self.network.wiring.dense;
        for (i, entry) in dense.f.iter().enumerate() {
            let pointer = format!("/network/wiring/dense/f/{i}");
            let src = resolve(&entry.src, format!("{pointer}/src"))?;
            let dst = resolve(&entry.dst, format!("{pointer}/dst"))?;
            let mat =
                Mat::from_rows(&entry.matrix).map_err(|e| err(format!("{pointer}/matrix"), e))?;
            b.set_f(dst, src, mat);
        }
        for (name, rows) in &dense.e {
            let pointer = format!("/network/wiring/dense/e/{name}");
            let node = resolve(name, pointer.clone())?;
            b.set_e(node, Mat::from_rows(rows).map_err(|e| err(pointer, e))?);
        }
        for (name, rows) in &dense.h {
            let pointer = format!("/network/wiring/dense/h/{name}");
            let node = resolve(name, pointer.clone())?;
            b.set_h(
                node,
                Mat::from_rows(rows).map_err(|e| err(pointer.clone(), e))?,
            );
            b.add_output(node);
        }

        if dense.h.is_empty() && !self.network.output_set.is_empty() {
            // No explicit H: the output set is an ordered stack.
            let mut order = Vec::with_capacity(self.network.output_set.len());
            for (i, name) in self.network.output_set.iter().enumerate() {
                order.push(resolve(name, format!("/network/output_set/{i}"))?);
            }
            b.stack_outputs(&order)
                .map_err(|e| err("/network/output_set", e))?;
        } else {
            for (i, name) in self.network.output_set.iter().enumerate() {
                let node = resolve(name, format!("/network/output_set/{i}"))?;
                b.add_output(node);
            }
        }
        if let Some(n) = self.network.n_y_ext {
            b.set_n_y_ext(n);
        }
        b.build().map_err(|e| err("/network", e))
    }

    /// Builds the full verification problem.
    pub fn into_problem(&self) -> Result<VerificationProblem, ProblemError> {
        let network = self.build_network()?;
        let c_tot = match &self.c_tot {
            None => return Err(err("/c_tot", "missing system-level contract")),
            Some(CtotSpec::Label(label)) => self.contract(label, "/c_tot")?,
            Some(CtotSpec::Inline(spec)) => build_contract("c_tot", spec)?,
        };
        let o = self.options;
        let options = VerifyOptions {
            tolerance: o.tolerance,
            mode: o.mode,
            horizon_extension: o.horizon_extension,
            extendibility_asserted: o.extendibility_asserted,
            strict_assumption_check: o.strict_assumption_check,
            simplex: SimplexOptions::default(),
        };
        VerificationProblem::new(network, c_tot, options).map_err(|e| err("/", e))
    }

    /// Canonical serialization of a problem: contracts deduplicated by
    /// structure and keyed by label, dense wiring, effective causality on
    /// every edge.
    pub fn from_problem(problem: &VerificationProblem) -> Self {
        let net = &problem.network;
        let mut contracts: BTreeMap<String, (ContractRef, ContractSpec)> = BTreeMap::new();
        let mut register = |c: &ContractRef| -> String {
            let base = if c.label().is_empty() {
                "contract"
            } else {
                c.label()
            };
            let mut key = base.to_string();
            let mut n = 1;
            loop {
                match contracts.get(&key) {
                    None => {
                        contracts.insert(key.clone(), (Arc::clone(c), contract_spec(c)));
                        return key;
                    }
                    Some((existing, _)) if existing.as_ref() == c.as_ref() => return key,
                    Some(_) => {
                        n += 1;
                        key = format!("{base}_{n}");
                    }
                }
            }
        };

        let nodes: Vec<NodeSpec> = net
            .nodes()
            .iter()
            .map(|node| NodeSpec {
                id: node.name.clone(),
                contract: register(&node.contract),
                n_d_ext: node.n_d_ext,
            })
            .collect();
        let c_tot_label = register(&problem.c_tot);

        let edges = net
            .edges()
            .iter()
            .map(|&(src, dst)| EdgeSpec {
                src: net.node(src).name.clone(),
                dst: net.node(dst).name.clone(),
                causality: Some(match net.causality().get(src, dst) {
                    Some(Causality::Strict) => CausalitySpec::Strict,
                    _ => CausalitySpec::Nonstrict,
                }),
            })
            .collect();

        let mut dense = DenseWiringSpec::default();
        for &(src, dst) in net.edges() {
            if let Some(f) = net.f(dst, src) {
                dense.f.push(FEntrySpec {
                    src: net.node(src).name.clone(),
                    dst: net.node(dst).name.clone(),
                    matrix: f.to_rows(),
                });
            }
        }
        for i in 0..net.node_count() {
            if !net.e(i).is_zero() {
                dense.e.insert(net.node(i).name.clone(), net.e(i).to_rows());
            }
            if let Some(h) = net.h(i) {
                dense.h.insert(net.node(i).name.clone(), h.to_rows());
            }
        }

        let o = problem.options;
        ProblemFile {
            contracts: contracts
                .into_iter()
                .map(|(k, (_, spec))| (k, spec))
                .collect(),
            network: NetworkSpec {
                nodes,
                edges,
                wiring: WiringSpec {
                    stack: BTreeMap::new(),
                    dense,
                },
                output_set: net
                    .output_set()
                    .iter()
                    .map(|&i| net.node(i).name.clone())
                    .collect(),
                n_y_ext: Some(net.n_y_ext()),
            },
            c_tot: Some(CtotSpec::Label(c_tot_label)),
            options: OptionsSpec {
                tolerance: o.tolerance,
                mode: o.mode,
                horizon_extension: o.horizon_extension,
                extendibility_asserted: o.extendibility_asserted,
                strict_assumption_check: o.strict_assumption_check,
            },
        }
    }
}

fn build_block(
    pointer: &str,
    spec: &BlockSpec,
    kind: crate::contracts::BlockKind,
    n_d: usize,
    n_y: usize,
) -> Result<InequalityBlock, ProblemError> {
    // Empty row lists carry no column information; reconstruct the shapes
    // from the contract dimensions so zero-row blocks round-trip.
    let mat = |rows: &[Vec<f64>], want_cols: usize, what: &str| -> Result<Mat, ProblemError> {
        if rows.is_empty() {
            Ok(Mat::zeros(0, want_cols))
        } else {
            Mat::from_rows(rows).map_err(|e| err(format!("{pointer}/{what}"), e))
        }
    };
    let coeff_d = mat(&spec.coeff_d, (spec.depth + 1) * n_d, "coeff_d")?;
    let coeff_y = mat(
        &spec.coeff_y,
        kind.y_window_len(spec.depth) * n_y,
        "coeff_y",
    )?;
    InequalityBlock::new(spec.depth, coeff_d, coeff_y, spec.rhs.clone())
        .map_err(|e| err(pointer, e))
}

fn build_contract(label: &str, spec: &ContractSpec) -> Result<ContractRef, ProblemError> {
    use crate::contracts::BlockKind;
    let base = format!("/contracts/{label}");
    let mut assumptions = Vec::with_capacity(spec.assumption_blocks.len());
    for (i, b) in spec.assumption_blocks.iter().enumerate() {
        assumptions.push(build_block(
            &format!("{base}/assumption_blocks/{i}"),
            b,
            BlockKind::Assumption,
            spec.n_d,
            spec.n_y,
        )?);
    }
    let mut guarantees = Vec::with_capacity(spec.guarantee_blocks.len());
    for (i, b) in spec.guarantee_blocks.iter().enumerate() {
        guarantees.push(build_block(
            &format!("{base}/guarantee_blocks/{i}"),
            b,
            BlockKind::Guarantee,
            spec.n_d,
            spec.n_y,
        )?);
    }
    LtiRdContract::new(spec.n_d, spec.n_y, assumptions, guarantees, label)
        .map(Arc::new)
        .map_err(|e| err(base, e))
}

fn contract_spec(c: &LtiRdContract) -> ContractSpec {
    let block = |b: &InequalityBlock| BlockSpec {
        depth: b.depth(),
        coeff_d: b.coeff_d().to_rows(),
        coeff_y: b.coeff_y().to_rows(),
        rhs: b.rhs().to_vec(),
    };
    ContractSpec {
        n_d: c.n_d(),
        n_y: c.n_y(),
        assumption_blocks: c.assumptions().iter().map(block).collect(),
        guarantee_blocks: c.guarantees().iter().map(block).collect(),
    }
}

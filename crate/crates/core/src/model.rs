//! A recurrent core plus a linear read-out from the final hidden state.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baseline::{self, VanillaConfig, VanillaRnn, VanillaTrace};
use crate::cell::{self, CellConfig, CellParams, CellState, InputGrads, StepTrace};
use crate::error::{Error, Result};
use crate::linalg::{init_weights, InitScheme, Matrix, Rng, Vector};
use crate::params::{Block, NamedBlock, Parameters};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Recurrent {
    Petnn { cfg: CellConfig, params: CellParams },
    Vanilla(VanillaRnn),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Trace {
    Petnn(StepTrace),
    Vanilla(VanillaTrace),
}

impl Trace {
    pub fn as_petnn(&self) -> Option<&StepTrace> {
        match self {
            Trace::Petnn(t) => Some(t),
            Trace::Vanilla(_) => None,
        }
    }
}

/// `y = W_out·s + b_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutHead {
    pub w_out: Matrix,
    pub b_out: Vector,
}

impl ReadoutHead {
    pub fn init(rng: &mut Rng, out_dim: usize, hidden_dim: usize, scheme: InitScheme) -> Self {
        ReadoutHead {
            w_out: init_weights(rng, out_dim, hidden_dim, scheme),
            b_out: Vector::zeros(out_dim),
        }
    }

    pub fn forward(&self, s: &Vector) -> Result<Vector> {
        self.w_out.affine(s, &self.b_out)
    }

    pub fn out_dim(&self) -> usize {
        self.b_out.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub core: Recurrent,
    pub head: ReadoutHead,
}

impl Model {
    pub fn petnn(cfg: CellConfig, out_dim: usize, rng: &mut Rng, scheme: InitScheme) -> Result<Self> {
        cfg.validate()?;
        if out_dim == 0 {
            return Err(Error::Config("output dimension must be at least 1".into()));
        }
        let params = CellParams::init(&cfg, rng, scheme);
        let head = ReadoutHead::init(rng, out_dim, cfg.hidden_dim, scheme);
        Ok(Model {
            core: Recurrent::Petnn { cfg, params },
            head,
        })
    }

    pub fn vanilla(cfg: VanillaConfig, out_dim: usize, rng: &mut Rng, scheme: InitScheme) -> Result<Self> {
        if cfg.input_dim == 0 || cfg.hidden_dim == 0 || out_dim == 0 {
            return Err(Error::Config("model dimensions must be at least 1".into()));
        }
        let rnn = VanillaRnn::init(&cfg, rng, scheme);
        let head = ReadoutHead::init(rng, out_dim, cfg.hidden_dim, scheme);
        Ok(Model {
            core: Recurrent::Vanilla(rnn),
            head,
        })
    }

    pub fn input_dim(&self) -> usize {
        match &self.core {
            Recurrent::Petnn { cfg, .. } => cfg.input_dim,
            Recurrent::Vanilla(r) => r.config().input_dim,
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.head.w_out.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.head.out_dim()
    }

    pub fn kind(&self) -> ModelKind {
        match self.core {
            Recurrent::Petnn { .. } => ModelKind::Petnn,
            Recurrent::Vanilla(_) => ModelKind::VanillaRnn,
        }
    }

    pub fn cell_config(&self) -> Option<&CellConfig> {
        match &self.core {
            Recurrent::Petnn { cfg, .. } => Some(cfg),
            Recurrent::Vanilla(_) => None,
        }
    }

    /// A model of identical structure with every parameter zero, used as a
    /// gradient buffer.
    pub fn zeros_like(&self) -> Model {
        let mut z = self.clone();
        z.fill(0.0);
        z
    }

    pub fn step(&self, state: &CellState, x: &Vector) -> Result<(CellState, Trace)> {
        match &self.core {
            Recurrent::Petnn { cfg, params } => {
                let (s, t) = cell::step(params, state, x, cfg)?;
                Ok((s, Trace::Petnn(t)))
            }
            Recurrent::Vanilla(rnn) => {
                let (s, t) = rnn.step(state, x)?;
                Ok((s, Trace::Vanilla(t)))
            }
        }
    }

    pub fn step_backward_into(&self, trace: &Trace, grad_out: &CellState, grads: &mut Model) -> Result<InputGrads> {
        match (&self.core, trace, &mut grads.core) {
            (Recurrent::Petnn { cfg, params }, Trace::Petnn(t), Recurrent::Petnn { params: g, .. }) => {
                cell::step_backward_into(params, cfg, t, grad_out, g)
            }
            (Recurrent::Vanilla(rnn), Trace::Vanilla(t), Recurrent::Vanilla(g)) => rnn.step_backward_into(t, grad_out, g),
            _ => Err(Error::Config("trace or gradient buffer does not match model kind".into())),
        }
    }

    /// Learnable scalars in core plus head.
    pub fn param_count(&self) -> u64 {
        let core = match &self.core {
            Recurrent::Petnn { cfg, .. } => cell::param_count(cfg),
            Recurrent::Vanilla(r) => baseline::param_count(&r.config()),
        };
        core + (self.out_dim() * (self.hidden_dim() + 1)) as u64
    }

    pub fn flop_count_per_step(&self) -> u64 {
        match &self.core {
            Recurrent::Petnn { cfg, .. } => cell::flop_count_per_step(cfg),
            Recurrent::Vanilla(r) => baseline::flop_count_per_step(&r.config()),
        }
    }

    /// Read-out FLOPs, charged once per sequence.
    pub fn head_flops(&self) -> u64 {
        let (o, h) = (self.out_dim() as u64, self.hidden_dim() as u64);
        2 * o * h + o
    }

    pub fn to_doc(&self) -> ModelDoc {
        ModelDoc {
            format_version: FORMAT_VERSION,
            kind: self.kind(),
            cell_config: self.cell_config().copied(),
            input_dim: self.input_dim(),
            hidden_dim: self.hidden_dim(),
            out_dim: self.out_dim(),
            blocks: self.to_blocks(),
        }
    }

    pub fn from_doc(doc: &ModelDoc) -> Result<Model> {
        if doc.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format_version {}", doc.format_version)));
        }
        let mut rng = Rng::new(0);
        let mut model = match doc.kind {
            ModelKind::Petnn => {
                let cfg = doc
                    .cell_config
                    .ok_or_else(|| Error::Checkpoint("petnn model without cell_config".into()))?;
                if cfg.input_dim != doc.input_dim || cfg.hidden_dim != doc.hidden_dim {
                    return Err(Error::Checkpoint("cell_config dimensions disagree with model".into()));
                }
                Model::petnn(cfg, doc.out_dim, &mut rng, InitScheme::Zero)?
            }
            ModelKind::VanillaRnn => Model::vanilla(
                VanillaConfig {
                    input_dim: doc.input_dim,
                    hidden_dim: doc.hidden_dim,
                },
                doc.out_dim,
                &mut rng,
                InitScheme::Zero,
            )?,
        };
        model.load_blocks(&doc.blocks)?;
        if !model.is_finite() {
            return Err(Error::Checkpoint("non-finite parameter value".into()));
        }
        Ok(model)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, serde_json::to_string_pretty(&self.to_doc())?.as_bytes())
    }

    pub fn load_json(path: &Path) -> Result<Model> {
        let doc: ModelDoc = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Model::from_doc(&doc)
    }
}

impl Parameters for Model {
    fn blocks(&self) -> Vec<Block<'_>> {
        let mut out = match &self.core {
            Recurrent::Petnn { params, .. } => params.blocks(),
            Recurrent::Vanilla(r) => r.blocks(),
        };
        out.push(Block {
            name: "W_out",
            rows: self.head.w_out.rows(),
            cols: self.head.w_out.cols(),
            data: self.head.w_out.as_slice(),
        });
        out.push(Block {
            name: "b_out",
            rows: self.head.b_out.len(),
            cols: 1,
            data: self.head.b_out.as_slice(),
        });
        out
    }

    fn blocks_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut out = match &mut self.core {
            Recurrent::Petnn { params, .. } => params.blocks_mut(),
            Recurrent::Vanilla(r) => r.blocks_mut(),
        };
        out.push(("W_out", self.head.w_out.as_mut_slice()));
        out.push(("b_out", self.head.b_out.as_mut_slice()));
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    Petnn,
    VanillaRnn,
}

/// Versioned JSON form of a model: configuration plus named row-major blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDoc {
    pub format_version: u32,
    pub kind: ModelKind,
    pub cell_config: Option<CellConfig>,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub out_dim: usize,
    pub blocks: Vec<NamedBlock>,
}

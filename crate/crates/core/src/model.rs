//! Multi-gate mixture of LSTM experts with three task heads and a capital
//! allocation head.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::features::{FeaturePanel, N_FEATURES};

pub const N_TASKS: usize = 3;
pub const TASK_NAMES: [&str; N_TASKS] = ["fast", "medium", "slow"];
/// Inputs to the allocation head: three pooled statistics per task plus the
/// allocation gate output.
pub const CAN_INPUTS: usize = 3 * N_TASKS + N_TASKS;
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MmoeConfig {
    pub n_experts: usize,
    pub lstm_layers: usize,
    pub lstm_hidden: usize,
    /// Affine layers per task head, output layer included. The allocation
    /// head uses the same depth and width.
    pub task_layers: usize,
    pub task_hidden: usize,
    pub sequence_length: usize,
    pub seed: u64,
}

/// Admissible values for each searchable field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridDomains {
    pub lstm_layers: Vec<usize>,
    pub lstm_hidden: Vec<usize>,
    pub n_experts: Vec<usize>,
    pub task_layers: Vec<usize>,
    pub task_hidden: Vec<usize>,
}

impl Default for GridDomains {
    fn default() -> Self {
        Self {
            lstm_layers: vec![1, 2, 3],
            lstm_hidden: vec![64, 126, 252, 512],
            n_experts: vec![3, 6, 9, 12],
            task_layers: vec![2, 3, 4],
            task_hidden: vec![64, 126, 252, 512],
        }
    }
}

impl GridDomains {
    pub fn size(&self) -> usize {
        self.lstm_layers.len()
            * self.lstm_hidden.len()
            * self.n_experts.len()
            * self.task_layers.len()
            * self.task_hidden.len()
    }

    /// Whether every value lies in the default domains.
    pub fn within_defaults(&self) -> bool {
        let d = GridDomains::default();
        let sub = |a: &[usize], b: &[usize]| a.iter().all(|v| b.contains(v));
        sub(&self.lstm_layers, &d.lstm_layers)
            && sub(&self.lstm_hidden, &d.lstm_hidden)
            && sub(&self.n_experts, &d.n_experts)
            && sub(&self.task_layers, &d.task_layers)
            && sub(&self.task_hidden, &d.task_hidden)
    }

    /// All configurations in lexicographic field order
    /// (experts, layers, hidden, task layers, task hidden).
    pub fn enumerate(&self, sequence_length: usize, seed: u64) -> Vec<MmoeConfig> {
        let mut out = Vec::with_capacity(self.size());
        for &n_experts in &self.n_experts {
            for &lstm_layers in &self.lstm_layers {
                for &lstm_hidden in &self.lstm_hidden {
                    for &task_layers in &self.task_layers {
                        for &task_hidden in &self.task_hidden {
                            out.push(MmoeConfig {
                                n_experts,
                                lstm_layers,
                                lstm_hidden,
                                task_layers,
                                task_hidden,
                                sequence_length,
                                seed,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    pub fn validate(&self, config: &MmoeConfig) -> Result<()> {
        let check = |name: &str, v: usize, dom: &[usize]| {
            if dom.contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} = {v} is outside {dom:?}")))
            }
        };
        check("n_experts", config.n_experts, &self.n_experts)?;
        check("lstm_layers", config.lstm_layers, &self.lstm_layers)?;
        check("lstm_hidden", config.lstm_hidden, &self.lstm_hidden)?;
        check("task_layers", config.task_layers, &self.task_layers)?;
        check("task_hidden", config.task_hidden, &self.task_hidden)
    }
}

impl MmoeConfig {
    fn check_shape(&self) -> Result<()> {
        let fields = [
            ("n_experts", self.n_experts),
            ("lstm_layers", self.lstm_layers),
            ("lstm_hidden", self.lstm_hidden),
            ("task_hidden", self.task_hidden),
            ("sequence_length", self.sequence_length),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.task_layers < 1 {
            return Err(Error::Config("task_layers must be positive".into()));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        param_specs(self)
            .0
            .iter()
            .map(|s| s.shape.iter().product::<usize>())
            .sum()
    }
}

// ---------------------------------------------------------------- params

#[derive(Debug, Clone, Copy, PartialEq)]
enum Init {
    Glorot { fan_in: usize, fan_out: usize },
    Zeros,
    ForgetBias { hidden: usize },
}

#[derive(Debug, Clone)]
struct ParamSpec {
    name: String,
    shape: Vec<usize>,
    init: Init,
}

#[derive(Debug, Clone, Copy)]
struct Affine {
    w: usize,
    b: usize,
}

#[derive(Debug, Clone, Copy)]
struct LstmLayer {
    w_ih: usize,
    w_hh: usize,
    b: usize,
}

#[derive(Debug, Clone)]
struct Layout {
    experts: Vec<Vec<LstmLayer>>,
    gates: Vec<Affine>,
    heads: Vec<Vec<Affine>>,
    can: Vec<Affine>,
}

fn param_specs(c: &MmoeConfig) -> (Vec<ParamSpec>, Layout) {
    let mut specs = Vec::new();
    let mut push = |name: String, shape: Vec<usize>, init: Init| {
        specs.push(ParamSpec { name, shape, init });
        specs.len() - 1
    };
    let h = c.lstm_hidden;
    let mut experts = Vec::new();
    for e in 0..c.n_experts {
        let mut layers = Vec::new();
        for l in 0..c.lstm_layers {
            let input = if l == 0 { N_FEATURES } else { h };
            let w_ih = push(
                format!("expert{e}.lstm{l}.w_ih"),
                vec![input, 4 * h],
                Init::Glorot {
                    fan_in: input,
                    fan_out: 4 * h,
                },
            );
            let w_hh = push(
                format!("expert{e}.lstm{l}.w_hh"),
                vec![h, 4 * h],
                Init::Glorot {
                    fan_in: h,
                    fan_out: 4 * h,
                },
            );
            let b = push(
                format!("expert{e}.lstm{l}.bias"),
                vec![4 * h],
                Init::ForgetBias { hidden: h },
            );
            layers.push(LstmLayer { w_ih, w_hh, b });
        }
        experts.push(layers);
    }
    let mut affine = |prefix: String, fan_in: usize, fan_out: usize| Affine {
        w: push(
            format!("{prefix}.w"),
            vec![fan_in, fan_out],
            Init::Glorot { fan_in, fan_out },
        ),
        b: push(format!("{prefix}.b"), vec![fan_out], Init::Zeros),
    };
    let mut gates = Vec::new();
    for task in TASK_NAMES {
        gates.push(affine(format!("gate_{task}"), N_FEATURES, c.n_experts));
    }
    gates.push(affine("gate_can".into(), N_FEATURES, N_TASKS));
    let mut mlp = |prefix: &str, input: usize, output: usize| {
        (0..c.task_layers)
            .map(|j| {
                let fan_in = if j == 0 { input } else { c.task_hidden };
                let fan_out = if j + 1 == c.task_layers { output } else { c.task_hidden };
                affine(format!("{prefix}.layer{j}"), fan_in, fan_out)
            })
            .collect::<Vec<_>>()
    };
    let heads = TASK_NAMES
        .iter()
        .map(|task| mlp(&format!("head_{task}"), h, 1))
        .collect();
    let can = mlp("can", CAN_INPUTS, N_TASKS);
    (
        specs,
        Layout {
            experts,
            gates,
            heads,
            can,
        },
    )
}

/// Parameter groups used for wiring checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamGroup {
    Experts,
    Gate(usize),
    Head(usize),
    Can,
}

impl ParamGroup {
    pub fn of(name: &str) -> ParamGroup {
        if name.starts_with("expert") {
            ParamGroup::Experts
        } else if name.starts_with("can.") {
            ParamGroup::Can
        } else if let Some(rest) = name.strip_prefix("gate_") {
            let k = TASK_NAMES
                .iter()
                .position(|t| rest.starts_with(&format!("{t}.")))
                .unwrap_or(N_TASKS);
            ParamGroup::Gate(k)
        } else {
            let k = TASK_NAMES
                .iter()
                .position(|t| name.starts_with(&format!("head_{t}.")))
                .expect("known parameter prefix");
            ParamGroup::Head(k)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmoeModel {
    config: MmoeConfig,
    names: Vec<String>,
    params: Vec<Tensor>,
}

/// Builds a model after checking the configuration against the default
/// search domains.
pub fn init_model(config: &MmoeConfig) -> Result<MmoeModel> {
    init_model_in(config, &GridDomains::default())
}

/// Builds a model after checking the configuration against `domains`.
pub fn init_model_in(config: &MmoeConfig, domains: &GridDomains) -> Result<MmoeModel> {
    domains.validate(config)?;
    init_model_unchecked(config)
}

/// Builds a model of any positive size. Used for toy networks in tests and
/// gradient checks.
pub fn init_model_unchecked(config: &MmoeConfig) -> Result<MmoeModel> {
    config.check_shape()?;
    let (specs, _) = param_specs(config);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut names = Vec::with_capacity(specs.len());
    let mut params = Vec::with_capacity(specs.len());
    for spec in specs {
        let numel: usize = spec.shape.iter().product();
        let data = match spec.init {
            Init::Glorot { fan_in, fan_out } => {
                let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                (0..numel).map(|_| rng.random_range(-a..a)).collect()
            }
            Init::Zeros => vec![0.0; numel],
            Init::ForgetBias { hidden } => (0..numel)
                .map(|j| if (hidden..2 * hidden).contains(&j) { 1.0 } else { 0.0 })
                .collect(),
        };
        names.push(spec.name);
        params.push(Tensor::new(spec.shape, data)?);
    }
    Ok(MmoeModel {
        config: config.clone(),
        names,
        params,
    })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    version: u32,
    config: MmoeConfig,
    params: Vec<NamedTensor>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NamedTensor {
    name: String,
    tensor: Tensor,
}

/// Tape handles for one bound copy of the parameters.
#[derive(Debug, Clone)]
pub struct BoundParams {
    pub vars: Vec<Var>,
}

/// Per-row inputs for a set of dates. Rows are grouped by date.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchInput {
    n_dates: usize,
    /// `(date slot, asset index)` per row, sorted by date slot.
    rows: Vec<(usize, usize)>,
    /// One `rows x 7` tensor per sequence step, oldest first.
    steps: Vec<Tensor>,
}

impl BatchInput {
    /// Gathers feature sequences of `len` days ending at each date in `dates`
    /// for every asset accepted by `active`.
    pub fn from_features(
        features: &FeaturePanel,
        dates: &[usize],
        len: usize,
        mut active: impl FnMut(usize, usize) -> bool,
    ) -> Result<BatchInput> {
        let mut rows = Vec::new();
        for (slot, &t) in dates.iter().enumerate() {
            let before = rows.len();
            for i in 0..features.n_assets() {
                if features.has_sequence(t, i, len) && active(t, i) {
                    rows.push((slot, i));
                }
            }
            if rows.len() == before {
                return Err(Error::Data(format!("no active assets on {}", features.dates()[t])));
            }
        }
        let n = rows.len();
        let mut steps = Vec::with_capacity(len);
        for s in 0..len {
            let mut data = Vec::with_capacity(n * N_FEATURES);
            for &(slot, i) in &rows {
                let t = dates[slot] + 1 + s - len;
                data.extend_from_slice(features.get(t, i).expect("sequence is valid"));
            }
            steps.push(Tensor::matrix(n, N_FEATURES, data)?);
        }
        Ok(BatchInput {
            n_dates: dates.len(),
            rows,
            steps,
        })
    }

    /// Builds an input from explicit sequences: `seqs[d][a]` is the
    /// `len x 7` row-major history of asset `a` on date `d`.
    pub fn from_sequences(seqs: &[Vec<Vec<f64>>], len: usize) -> Result<BatchInput> {
        let mut rows = Vec::new();
        for (slot, assets) in seqs.iter().enumerate() {
            if assets.is_empty() {
                return Err(Error::Data(format!("no active assets in slot {slot}")));
            }
            for (a, seq) in assets.iter().enumerate() {
                if seq.len() != len * N_FEATURES || seq.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Data(format!(
                        "slot {slot} asset {a}: expected {len} finite feature rows"
                    )));
                }
                rows.push((slot, a));
            }
        }
        let mut steps = Vec::with_capacity(len);
        for s in 0..len {
            let mut data = Vec::with_capacity(rows.len() * N_FEATURES);
            for &(slot, a) in &rows {
                data.extend_from_slice(&seqs[slot][a][s * N_FEATURES..(s + 1) * N_FEATURES]);
            }
            steps.push(Tensor::matrix(rows.len(), N_FEATURES, data)?);
        }
        Ok(BatchInput {
            n_dates: seqs.len(),
            rows,
            steps,
        })
    }

    pub fn n_dates(&self) -> usize {
        self.n_dates
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[(usize, usize)] {
        &self.rows
    }

    pub fn sequence_length(&self) -> usize {
        self.steps.len()
    }

    /// Active rows per date slot.
    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_dates];
        for &(slot, _) in &self.rows {
            c[slot] += 1;
        }
        c
    }

    /// `dates x rows` matrix averaging rows within each date.
    pub fn mean_matrix(&self) -> Tensor {
        let counts = self.counts();
        let n = self.rows.len();
        let mut g = Tensor::zeros(&[self.n_dates, n]);
        for (r, &(slot, _)) in self.rows.iter().enumerate() {
            g.data_mut()[slot * n + r] = 1.0 / counts[slot] as f64;
        }
        g
    }

    /// `rows x dates` indicator matrix broadcasting a per-date value to rows.
    pub fn spread_matrix(&self) -> Tensor {
        let mut b = Tensor::zeros(&[self.rows.len(), self.n_dates]);
        for (r, &(slot, _)) in self.rows.iter().enumerate() {
            b.data_mut()[r * self.n_dates + slot] = 1.0;
        }
        b
    }
}

/// Tape handles produced by one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardVars {
    /// Per-row task scores, each `rows x 1`.
    pub y: [Var; N_TASKS],
    /// Allocation weights, `dates x 3`.
    pub w: Var,
    /// Task gate outputs, each `rows x n_experts`.
    pub alpha: [Var; N_TASKS],
    /// Allocation gate output, `dates x 3`.
    pub beta: Var,
    /// Averaging matrix from [`BatchInput::mean_matrix`].
    pub mean_matrix: Var,
    pub spread_matrix: Var,
}

/// Detached forward outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub y: [Vec<f64>; N_TASKS],
    pub w: Vec<[f64; N_TASKS]>,
}

impl MmoeModel {
    pub fn config(&self) -> &MmoeConfig {
        &self.config
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::numel).sum()
    }

    /// Replaces all parameters; shapes must match.
    pub fn set_params(&mut self, params: Vec<Tensor>) -> Result<()> {
        if params.len() != self.params.len() || params.iter().zip(&self.params).any(|(a, b)| a.shape() != b.shape()) {
            return Err(Error::InvalidArgument("parameter shapes do not match".into()));
        }
        self.params = params;
        Ok(())
    }

    /// Records every parameter on `tape`; `trainable[k]` false records a
    /// constant instead.
    pub fn bind(&self, tape: &mut Tape, trainable: Option<&[bool]>) -> BoundParams {
        let vars = self
            .params
            .iter()
            .enumerate()
            .map(|(k, p)| {
                if trainable.is_none_or(|m| m[k]) {
                    tape.param(p.clone())
                } else {
                    tape.constant(p.clone())
                }
            })
            .collect();
        BoundParams { vars }
    }

    pub fn bind_constants(&self, tape: &mut Tape) -> BoundParams {
        let vars = self.params.iter().map(|p| tape.constant(p.clone())).collect();
        BoundParams { vars }
    }

    /// Builds the forward graph for `input` using handles from [`Self::bind`].
    pub fn forward(&self, tape: &mut Tape, p: &BoundParams, input: &BatchInput) -> Result<ForwardVars> {
        if input.n_rows() == 0 || input.n_dates == 0 {
            return Err(Error::Data("forward needs at least one active asset".into()));
        }
        if input.sequence_length() != self.config.sequence_length {
            return Err(Error::InvalidArgument(format!(
                "input sequence length {} differs from the model's {}",
                input.sequence_length(),
                self.config.sequence_length
            )));
        }
        let (_, layout) = param_specs(&self.config);
        let v = |k: usize| p.vars[k];
        let n = input.n_rows();
        let h = self.config.lstm_hidden;

        let xs: Vec<Var> = input.steps.iter().map(|s| tape.constant(s.clone())).collect();
        let last = *xs.last().expect("sequence_length >= 1");

        let mut expert_out = Vec::with_capacity(self.config.n_experts);
        for layers in &layout.experts {
            let mut seq = xs.clone();
            let mut final_h = last;
            for (l, layer) in layers.iter().enumerate() {
                let keep_seq = l + 1 < layers.len();
                let mut state = tape.constant(Tensor::zeros(&[n, 2 * h]));
                let mut next = Vec::with_capacity(if keep_seq { seq.len() } else { 0 });
                for &x in &seq {
                    state = tape.lstm_cell(x, state, v(layer.w_ih), v(layer.w_hh), v(layer.b))?;
                    if keep_seq {
                        next.push(tape.slice_cols(state, 0, h)?);
                    }
                }
                final_h = tape.slice_cols(state, 0, h)?;
                seq = next;
            }
            expert_out.push(final_h);
        }

        let gate = |tape: &mut Tape, a: Affine, x: Var| -> Result<Var> {
            let z = tape.matmul(x, v(a.w))?;
            let z = tape.add(z, v(a.b))?;
            Ok(tape.softmax(z)?)
        };
        let mlp = |tape: &mut Tape, layers: &[Affine], mut x: Var| -> Result<Var> {
            for (j, a) in layers.iter().enumerate() {
                x = tape.matmul(x, v(a.w))?;
                x = tape.add(x, v(a.b))?;
                if j + 1 < layers.len() {
                    x = tape.tanh(x)?;
                }
            }
            Ok(x)
        };

        let mut ys = Vec::with_capacity(N_TASKS);
        let mut alphas = Vec::with_capacity(N_TASKS);
        for k in 0..N_TASKS {
            let alpha = gate(tape, layout.gates[k], last)?;
            let mut mix: Option<Var> = None;
            for (e, &he) in expert_out.iter().enumerate() {
                let a_e = tape.slice_cols(alpha, e, e + 1)?;
                let term = tape.scale_rows(he, a_e)?;
                mix = Some(match mix {
                    None => term,
                    Some(m) => tape.add(m, term)?,
                });
            }
            let out = mlp(tape, &layout.heads[k], mix.expect("n_experts >= 1"))?;
            ys.push(tape.tanh(out)?);
            alphas.push(alpha);
        }

        let g = tape.constant(input.mean_matrix());
        let spread = tape.constant(input.spread_matrix());
        let mean_feat = tape.matmul(g, last)?;
        let beta = gate(tape, layout.gates[N_TASKS], mean_feat)?;
        let mut can_in = Vec::with_capacity(N_TASKS + 1);
        for (k, &y) in ys.iter().enumerate() {
            let mean = tape.matmul(g, y)?;
            let centred = tape.matmul(spread, mean)?;
            let dev = tape.sub(y, centred)?;
            let dev2 = tape.square(dev)?;
            let var = tape.matmul(g, dev2)?;
            let sd = tape.sqrt(var)?;
            let ay = tape.abs(y)?;
            let mabs = tape.matmul(g, ay)?;
            let pooled = tape.concat_cols(&[mean, sd, mabs])?;
            let b_k = tape.slice_cols(beta, k, k + 1)?;
            can_in.push(tape.scale_rows(pooled, b_k)?);
        }
        can_in.push(beta);
        let can_x = tape.concat_cols(&can_in)?;
        let logits = mlp(tape, &layout.can, can_x)?;
        let w = tape.softmax(logits)?;

        Ok(ForwardVars {
            y: [ys[0], ys[1], ys[2]],
            w,
            alpha: [alphas[0], alphas[1], alphas[2]],
            beta,
            mean_matrix: g,
            spread_matrix: spread,
        })
    }

    /// Forward pass without gradient bookkeeping.
    pub fn predict(&self, input: &BatchInput) -> Result<Prediction> {
        let mut tape = Tape::new();
        let p = self.bind_constants(&mut tape);
        let out = self.forward(&mut tape, &p, input)?;
        let y = out.y.map(|v| tape.value(v).data().to_vec());
        let w = tape
            .value(out.w)
            .data()
            .chunks(N_TASKS)
            .map(|c| [c[0], c[1], c[2]])
            .collect();
        Ok(Prediction { y, w })
    }

    pub fn to_json(&self) -> Result<String> {
        let ck = Checkpoint {
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            params: self
                .names
                .iter()
                .zip(&self.params)
                .map(|(name, tensor)| NamedTensor {
                    name: name.clone(),
                    tensor: tensor.clone(),
                })
                .collect(),
        };
        serde_json::to_string(&ck).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<MmoeModel> {
        let ck: Checkpoint = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {}",
                ck.version
            )));
        }
        let mut model = init_model_unchecked(&ck.config)?;
        if ck.params.len() != model.params.len() {
            return Err(Error::Checkpoint("parameter count mismatch".into()));
        }
        for (k, nt) in ck.params.into_iter().enumerate() {
            if nt.name != model.names[k] || nt.tensor.shape() != model.params[k].shape() {
                return Err(Error::Checkpoint(format!("unexpected parameter `{}`", nt.name)));
            }
            model.params[k] = Tensor::new(nt.tensor.shape().to_vec(), nt.tensor.into_data())?;
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<MmoeModel> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

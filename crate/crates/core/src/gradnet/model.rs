//! The dual-system toy model.
//!
//! ```text
//! tokens ─▶ planner (L self-attention blocks) ─┬─▶ grounding head ─▶ (x, y)
//!                                              │
//!                       gradient scale λ ◀─────┘
//!                              │
//!          learnable queries ─▶ k cross-attention layers ─▶ action expert ─▶ H × 2
//! ```

use crate::error::{Error, Result};
use crate::gradnet::tape::{Tape, Var};
use crate::matcore::Matrix;
use crate::rng::{stream, SeededRng};
use crate::synthtasks::EncodedExample;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Embedding width.
    pub d: usize,
    /// Planner blocks.
    pub layers: usize,
    /// Learnable query tokens.
    pub queries: usize,
    /// Planner layers the querying transformer attends to.
    pub k: usize,
    /// Action chunk length.
    pub horizon: usize,
    pub vocab_size: usize,
    /// Index of the prompt token, routed to the prompt embedding.
    pub prompt_id: usize,
    /// Gradient decay between the querying transformer and the planner.
    pub decay: f64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: String| Err(Error::Config { key: key.into(), msg });
        if self.d == 0 {
            return bad("model.d", "must be positive".into());
        }
        if self.layers == 0 {
            return bad("model.layers", "must be positive".into());
        }
        if self.queries == 0 {
            return bad("model.queries", "must be positive".into());
        }
        if self.k == 0 || self.k > self.layers {
            return bad("model.k", format!("must lie in 1..={}", self.layers));
        }
        if self.horizon == 0 {
            return bad("model.horizon", "must be positive".into());
        }
        if self.prompt_id >= self.vocab_size {
            return bad("model.vocab_size", "prompt id outside vocabulary".into());
        }
        if !(0.0..=1.0).contains(&self.decay) {
            return bad("model.decay", format!("{} outside [0, 1]", self.decay));
        }
        Ok(())
    }

    pub fn hidden_ff(&self) -> usize {
        4 * self.d
    }

    /// Name of the final planner block's q-projection.
    pub fn default_probe_param(&self) -> String {
        format!("planner.{}.wq", self.layers - 1)
    }

    /// Canonical parameter names and shapes, in storage order.
    pub fn param_layout(&self) -> Vec<(String, usize, usize)> {
        let d = self.d;
        let ff = self.hidden_ff();
        let mut out = vec![
            ("embed".to_string(), self.vocab_size, d),
            ("prompt".to_string(), 1, d),
        ];
        for l in 0..self.layers {
            for w in ["wq", "wk", "wv", "wo"] {
                out.push((format!("planner.{l}.{w}"), d, d));
            }
            out.push((format!("planner.{l}.ff1"), d, ff));
            out.push((format!("planner.{l}.ff1_bias"), 1, ff));
            out.push((format!("planner.{l}.ff2"), ff, d));
            out.push((format!("planner.{l}.ff2_bias"), 1, d));
        }
        out.push(("ground.w".to_string(), d, 2));
        out.push(("ground.b".to_string(), 1, 2));
        out.push(("query.tokens".to_string(), self.queries, d));
        for j in 0..self.k {
            for w in ["wq", "wk", "wv", "wo"] {
                out.push((format!("xattn.{j}.{w}"), d, d));
            }
        }
        let flat = self.queries * d;
        out.push(("expert.w1".to_string(), flat, ff));
        out.push(("expert.b1".to_string(), 1, ff));
        out.push(("expert.w2".to_string(), ff, 2 * self.horizon));
        out.push(("expert.b2".to_string(), 1, 2 * self.horizon));
        out
    }
}

/// Which supervision a loss or gradient refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Grounding,
    Action,
}

/// Named parameter matrices plus the architecture they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    pub config: ModelConfig,
    names: Vec<String>,
    params: Vec<Matrix>,
}

/// Init range multiplier for planner q/k projections.
const QK_INIT_GAIN: f64 = 2.0;

/// Parameter groups used for structural checks.
pub fn is_planner_param(name: &str) -> bool {
    name == "embed" || name == "prompt" || name.starts_with("planner.")
}

impl ToyModel {
    /// Uniform `±1/√fan_in` for weight matrices (`±2/√fan_in` for planner
    /// q/k), `±1` for embeddings and query tokens, zero biases.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = SeededRng::stream(seed, stream::INIT);
        let mut names = Vec::new();
        let mut params = Vec::new();
        for (name, rows, cols) in config.param_layout() {
            let bound = if name == "embed" || name == "prompt" || name == "query.tokens" {
                1.0
            } else if name.ends_with("bias") || name == "ground.b" || name.starts_with("expert.b") {
                0.0
            } else if name.starts_with("planner.") && (name.ends_with(".wq") || name.ends_with(".wk")) {
                QK_INIT_GAIN / (rows as f64).sqrt()
            } else {
                1.0 / (rows as f64).sqrt()
            };
            let data = (0..rows * cols)
                .map(|_| if bound == 0.0 { 0.0 } else { rng.uniform(-bound, bound) })
                .collect();
            names.push(name);
            params.push(Matrix::new(rows, cols, data)?);
        }
        Ok(Self {
            config,
            names,
            params,
        })
    }

    /// Every parameter zero.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let (names, params) = config
            .param_layout()
            .into_iter()
            .map(|(n, r, c)| (n, Matrix::zeros(r, c)))
            .unzip();
        Ok(Self {
            config,
            names,
            params,
        })
    }

    /// Rebuilds a model from named matrices in canonical order.
    pub fn from_params(config: ModelConfig, named: Vec<(String, Matrix)>) -> Result<Self> {
        config.validate()?;
        let layout = config.param_layout();
        if layout.len() != named.len() {
            return Err(Error::Format(format!(
                "expected {} parameter blocks, found {}",
                layout.len(),
                named.len()
            )));
        }
        for ((ln, lr, lc), (n, m)) in layout.iter().zip(&named) {
            if ln != n || (*lr, *lc) != m.shape() {
                return Err(Error::Format(format!(
                    "parameter {n:?} {:?} does not match expected {ln:?} {lr}x{lc}",
                    m.shape()
                )));
            }
        }
        let (names, params) = named.into_iter().unzip();
        Ok(Self {
            config,
            names,
            params,
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn params(&self) -> &[Matrix] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Matrix] {
        &mut self.params
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn param(&self, name: &str) -> Result<&Matrix> {
        Ok(&self.params[self.index_of(name)?])
    }

    pub fn param_mut(&mut self, name: &str) -> Result<&mut Matrix> {
        let i = self.index_of(name)?;
        Ok(&mut self.params[i])
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.rows() * p.cols()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.as_slice().iter().all(|v| v.is_finite()))
    }

    /// Copy of the model with a different decay factor.
    pub fn with_decay(&self, decay: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&decay) {
            return Err(Error::InvalidDecay(decay));
        }
        let mut m = self.clone();
        m.config.decay = decay;
        Ok(m)
    }

    /// Starts a forward pass with every parameter registered on a new tape.
    pub fn begin(&self) -> Forward<'_> {
        let mut tape = Tape::new();
        let vars = self
            .params
            .iter()
            .map(|p| tape.param(p.rows(), p.cols(), p.as_slice().to_vec()))
            .collect();
        Forward {
            model: self,
            tape,
            vars,
            attention: Vec::new(),
        }
    }

    /// Per-layer hidden states (`len x d` each) for one token sequence.
    pub fn planner_forward(&self, token_ids: &[usize]) -> Result<Vec<Matrix>> {
        let mut f = self.begin();
        let hidden = f.planner(&[token_ids])?;
        hidden.iter().map(|h| f.matrix(*h)).collect()
    }

    /// Predicted point from hidden states of one sequence.
    pub fn grounding_forward(&self, hidden: &[Matrix]) -> Result<[f64; 2]> {
        let mut f = self.begin();
        let last = hidden.last().ok_or(Error::ShapeMismatch("no hidden states".into()))?;
        let h = f.constant(last);
        let p = f.grounding(h, 1)?;
        let v = f.tape.value(p);
        Ok([v[0], v[1]])
    }

    /// Querying-transformer output (`queries x d`) for one sequence's
    /// hidden states.
    pub fn querying_transformer_forward(&self, hidden: &[Matrix]) -> Result<Matrix> {
        let mut f = self.begin();
        let seq = hidden.first().ok_or(Error::ShapeMismatch("no hidden states".into()))?.rows();
        let vars: Vec<Var> = hidden.iter().map(|h| f.constant(h)).collect();
        let q = f.querying(&vars, 1, seq)?;
        f.matrix(q)
    }

    /// Action chunk (`H x 2`) from a querying-transformer output.
    pub fn action_forward(&self, query_output: &Matrix) -> Result<Matrix> {
        let c = &self.config;
        if query_output.shape() != (c.queries, c.d) {
            return Err(Error::ShapeMismatch(format!(
                "query output {:?}, expected ({}, {})",
                query_output.shape(),
                c.queries,
                c.d
            )));
        }
        let mut f = self.begin();
        let q = f.constant(query_output);
        let a = f.action(q, 1)?;
        let v = f.tape.value(a).to_vec();
        Matrix::new(c.horizon, 2, v)
    }

    /// Mean loss of `objective` over `batch`, no gradients kept.
    pub fn eval_loss(&self, batch: &[EncodedExample], objective: Objective) -> Result<f64> {
        let mut f = self.begin();
        let l = f.loss(batch, objective)?;
        Ok(f.tape.value(l)[0])
    }

    /// Full-batch mean gradient of `objective` with respect to `param`.
    pub fn gradient_of(&self, param: &str, batch: &[EncodedExample], objective: Objective) -> Result<Matrix> {
        let idx = self.index_of(param)?;
        let grads = self.gradients(batch, objective)?;
        Ok(grads.into_iter().nth(idx).expect("index in range"))
    }

    /// Mean gradient of `objective` for every parameter, in storage order.
    pub fn gradients(&self, batch: &[EncodedExample], objective: Objective) -> Result<Vec<Matrix>> {
        Ok(self.loss_and_gradients(batch, objective)?.1)
    }

    /// Batch-mean loss together with every parameter gradient.
    pub fn loss_and_gradients(&self, batch: &[EncodedExample], objective: Objective) -> Result<(f64, Vec<Matrix>)> {
        let mut f = self.begin();
        let loss = f.loss(batch, objective)?;
        let value = f.tape.value(loss)[0];
        f.tape.backward(loss)?;
        Ok((value, f.param_grads()?))
    }
}

const POS_BASE: f64 = 100.0;

fn sinusoid(seq: usize, d: usize) -> Vec<f64> {
    let mut pe = vec![0.0; seq * d];
    for pos in 0..seq {
        for i in 0..d {
            let pair = (i / 2) as f64;
            let angle = pos as f64 / POS_BASE.powf(2.0 * pair / d as f64);
            pe[pos * d + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    pe
}

/// One forward computation recorded on a tape.
pub struct Forward<'m> {
    model: &'m ToyModel,
    pub tape: Tape,
    vars: Vec<Var>,
    /// Attention nodes in creation order, for inspection.
    pub attention: Vec<Var>,
}

impl<'m> Forward<'m> {
    pub fn var(&self, name: &str) -> Result<Var> {
        Ok(self.vars[self.model.index_of(name)?])
    }

    fn p(&self, name: &str) -> Var {
        self.var(name).expect("canonical parameter name")
    }

    pub fn constant(&mut self, m: &Matrix) -> Var {
        self.tape.constant(m.rows(), m.cols(), m.as_slice().to_vec())
    }

    pub fn matrix(&self, v: Var) -> Result<Matrix> {
        let (r, c) = self.tape.shape(v);
        Matrix::new(r, c, self.tape.value(v).to_vec())
    }

    /// Gradients of every parameter (zero where none flowed).
    pub fn param_grads(&self) -> Result<Vec<Matrix>> {
        self.model
            .params
            .iter()
            .zip(&self.vars)
            .map(|(p, v)| match self.tape.grad(*v) {
                Some(g) => Matrix::new(p.rows(), p.cols(), g.to_vec()),
                None => Ok(Matrix::zeros(p.rows(), p.cols())),
            })
            .collect()
    }

    /// Planner over a batch of equal-length sequences. Returns one
    /// `(batch·len) x d` state per block.
    pub fn planner(&mut self, seqs: &[&[usize]]) -> Result<Vec<Var>> {
        let cfg = &self.model.config;
        let (d, vocab) = (cfg.d, cfg.vocab_size);
        let seq = seqs.first().ok_or(Error::EmptyBatch)?.len();
        if seq == 0 {
            return Err(Error::ShapeMismatch("empty token sequence".into()));
        }
        let mut rows = Vec::with_capacity(seqs.len() * seq);
        for s in seqs {
            if s.len() != seq {
                return Err(Error::ShapeMismatch("sequences in a batch differ in length".into()));
            }
            for &id in s.iter() {
                if id >= vocab {
                    return Err(Error::OutOfVocabulary { id, vocab });
                }
                // The prompt token reads the dedicated prompt embedding, which
                // sits one past the end of the table.
                rows.push(if id == cfg.prompt_id { vocab } else { id });
            }
        }
        let table = self.tape.concat_rows(self.p("embed"), self.p("prompt"))?;
        let emb = self.tape.gather(table, rows)?;
        let pe = sinusoid(seq, d).repeat(seqs.len());
        let pe = self.tape.constant(seqs.len() * seq, d, pe);
        let mut x = self.tape.add(emb, pe)?;

        let mut hidden = Vec::with_capacity(cfg.layers);
        for l in 0..cfg.layers {
            let q = self.tape.matmul(x, self.p(&format!("planner.{l}.wq")))?;
            let k = self.tape.matmul(x, self.p(&format!("planner.{l}.wk")))?;
            let v = self.tape.matmul(x, self.p(&format!("planner.{l}.wv")))?;
            let a = self.tape.attention(q, k, v, seq, seq)?;
            self.attention.push(a);
            let o = self.tape.matmul(a, self.p(&format!("planner.{l}.wo")))?;
            let h = self.tape.add(x, o)?;
            let f1 = self.tape.matmul(h, self.p(&format!("planner.{l}.ff1")))?;
            let f1 = self.tape.add_bias(f1, self.p(&format!("planner.{l}.ff1_bias")))?;
            let f1 = self.tape.gelu(f1);
            let f2 = self.tape.matmul(f1, self.p(&format!("planner.{l}.ff2")))?;
            let f2 = self.tape.add_bias(f2, self.p(&format!("planner.{l}.ff2_bias")))?;
            x = self.tape.add(h, f2)?;
            hidden.push(x);
        }
        Ok(hidden)
    }

    /// Linear readout of the last position of each sequence: `batch x 2`.
    pub fn grounding(&mut self, final_hidden: Var, batch: usize) -> Result<Var> {
        let (rows, d) = self.tape.shape(final_hidden);
        if d != self.model.config.d || batch == 0 || rows % batch != 0 {
            return Err(Error::ShapeMismatch(format!("grounding input {rows}x{d}")));
        }
        let seq = rows / batch;
        let readout = self.tape.gather(final_hidden, (0..batch).map(|b| b * seq + seq - 1).collect())?;
        let y = self.tape.matmul(readout, self.p("ground.w"))?;
        self.tape.add_bias(y, self.p("ground.b"))
    }

    /// Learnable queries cross-attending the last `k` planner layers, each
    /// seen through the gradient-decay node: `(batch·queries) x d`.
    pub fn querying(&mut self, hidden: &[Var], batch: usize, seq: usize) -> Result<Var> {
        let cfg = self.model.config.clone();
        if cfg.k > hidden.len() {
            return Err(Error::ShapeMismatch(format!(
                "querying transformer needs {} planner layers, got {}",
                cfg.k,
                hidden.len()
            )));
        }
        for h in hidden {
            if self.tape.shape(*h) != (batch * seq, cfg.d) {
                return Err(Error::ShapeMismatch(format!(
                    "planner state {:?}, expected ({}, {})",
                    self.tape.shape(*h),
                    batch * seq,
                    cfg.d
                )));
            }
        }
        let first = hidden.len() - cfg.k;
        let mut queries = self.tape.tile(self.p("query.tokens"), batch);
        for j in 0..cfg.k {
            let src = self.tape.scale_grad(hidden[first + j], cfg.decay)?;
            let q = self.tape.matmul(queries, self.p(&format!("xattn.{j}.wq")))?;
            let k = self.tape.matmul(src, self.p(&format!("xattn.{j}.wk")))?;
            let v = self.tape.matmul(src, self.p(&format!("xattn.{j}.wv")))?;
            let a = self.tape.attention(q, k, v, cfg.queries, seq)?;
            self.attention.push(a);
            queries = self.tape.matmul(a, self.p(&format!("xattn.{j}.wo")))?;
        }
        Ok(queries)
    }

    /// Two-layer expert on the flattened queries: `batch x (2H)`.
    pub fn action(&mut self, query_out: Var, batch: usize) -> Result<Var> {
        let cfg = &self.model.config;
        let flat = self.tape.reshape(query_out, batch, cfg.queries * cfg.d)?;
        let h = self.tape.matmul(flat, self.p("expert.w1"))?;
        let h = self.tape.add_bias(h, self.p("expert.b1"))?;
        let h = self.tape.gelu(h);
        let y = self.tape.matmul(h, self.p("expert.w2"))?;
        self.tape.add_bias(y, self.p("expert.b2"))
    }

    /// Batch-mean loss. Examples are grouped by sequence length and the
    /// group losses combined with weights proportional to group size, so the
    /// result is the plain mean over examples and output elements.
    pub fn loss(&mut self, batch: &[EncodedExample], objective: Objective) -> Result<Var> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let mut lengths: Vec<usize> = batch.iter().map(|e| e.token_ids.len()).collect();
        lengths.sort_unstable();
        lengths.dedup();
        let mut terms = Vec::new();
        for len in lengths {
            let group: Vec<&EncodedExample> = batch.iter().filter(|e| e.token_ids.len() == len).collect();
            let seqs: Vec<&[usize]> = group.iter().map(|e| e.token_ids.as_slice()).collect();
            let hidden = self.planner(&seqs)?;
            let b = group.len();
            let (pred, target): (Var, Vec<f64>) = match objective {
                Objective::Grounding => {
                    let last = *hidden.last().expect("at least one layer");
                    let p = self.grounding(last, b)?;
                    (p, group.iter().flat_map(|e| e.grounding_target).collect())
                }
                Objective::Action => {
                    let q = self.querying(&hidden, b, len)?;
                    let p = self.action(q, b)?;
                    (p, group.iter().flat_map(|e| e.action_target.iter().copied()).collect())
                }
            };
            if self.tape.value(pred).len() != target.len() {
                return Err(Error::ShapeMismatch("target size does not match model output".into()));
            }
            let l = self.tape.mse(pred, target)?;
            terms.push((l, b as f64 / batch.len() as f64));
        }
        if terms.len() == 1 && terms[0].1 == 1.0 {
            return Ok(terms[0].0);
        }
        self.tape.weighted_sum(terms)
    }
}

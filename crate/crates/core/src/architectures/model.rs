use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::{data_loss, LossBreakdown, OutputGrads};
use super::spec::{ArchitectureSpec, GateOperand, GatingMode, Variant};
use crate::datasynth::CloudLabel;
use crate::gradcore::{clamp_prob, xavier_uniform, Matrix, ParamKind, ParamStore, Tape, Var, PROB_EPS};
use crate::{Error, Result};

/// Per-pixel model outputs. Class probabilities are clamped to
/// `[1e-7, 1 - 1e-7]`; the thickness distribution is not.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelOutputs {
    pub u_cloud: Vec<f64>,
    pub u_clear: Vec<f64>,
    /// `P(liquid | cloudy)` when [`Self::phase_conditional`], else `P(liquid)`.
    pub u_liquid: Vec<f64>,
    pub u_ice: Vec<f64>,
    /// `n x 3` over thin / moderate / thick, when the aux head exists.
    pub thickness: Option<Matrix>,
    pub y_cot_hat: Vec<f64>,
    pub x_recon: Option<Matrix>,
    pub phase_conditional: bool,
}

impl ModelOutputs {
    pub fn len(&self) -> usize {
        self.u_cloud.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u_cloud.is_empty()
    }
}

/// Raw head activations before clamping.
#[derive(Debug)]
enum ClassHeads {
    /// Sigmoid cloud probability and sigmoid conditional liquid probability.
    Hierarchical { cloud: (usize, Var), liquid: (usize, Var) },
    /// Softmax over clear / liquid / ice.
    Flat((usize, Var)),
}

/// One recorded forward pass: a tape per parameter store.
#[derive(Debug)]
pub(crate) struct Recorded {
    tapes: Vec<Tape>,
    classes: ClassHeads,
    aux: Option<(usize, Var)>,
    y: (usize, Var),
    recon: Option<(usize, Var)>,
}

impl Recorded {
    fn value(&self, (t, v): (usize, Var)) -> &Matrix {
        self.tapes[t].value(v)
    }
}

fn insert_dense(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, d_in: usize, d_out: usize) -> Result<()> {
    store.insert(format!("{name}.w"), ParamKind::Weight, xavier_uniform(d_in, d_out, rng))?;
    store.insert(format!("{name}.b"), ParamKind::Bias, Matrix::zeros(1, d_out))?;
    Ok(())
}

/// `prefix.0 .. prefix.{k-1}` hidden ReLU layers then a linear `prefix.out`.
fn insert_head(
    store: &mut ParamStore,
    rng: &mut ChaCha8Rng,
    prefix: &str,
    d_in: usize,
    hidden: &[usize],
    d_out: usize,
) -> Result<()> {
    let mut d = d_in;
    for (i, &w) in hidden.iter().enumerate() {
        insert_dense(store, rng, &format!("{prefix}.{i}"), d, w)?;
        d = w;
    }
    insert_dense(store, rng, &format!("{prefix}.out"), d, d_out)
}

fn dense(tape: &mut Tape, store: &ParamStore, name: &str, input: Var) -> Result<Var> {
    let lookup = |suffix: &str| {
        store
            .id(&format!("{name}.{suffix}"))
            .ok_or_else(|| Error::State(format!("parameter {name}.{suffix} missing")))
    };
    let w = tape.param(store, lookup("w")?);
    let b = tape.param(store, lookup("b")?);
    tape.dense(input, w, b)
}

/// Hidden ReLU stack of a head; returns the last hidden activation.
fn hidden(tape: &mut Tape, store: &ParamStore, prefix: &str, layers: usize, input: Var) -> Result<Var> {
    let mut h = input;
    for i in 0..layers {
        let a = dense(tape, store, &format!("{prefix}.{i}"), h)?;
        h = tape.relu(a);
    }
    Ok(h)
}

fn head(tape: &mut Tape, store: &ParamStore, prefix: &str, layers: usize, input: Var) -> Result<Var> {
    let h = hidden(tape, store, prefix, layers, input)?;
    dense(tape, store, &format!("{prefix}.out"), h)
}

const SEQ_STAGES: [&str; 3] = ["seq_mask", "seq_phase", "seq_reg"];

/// A model instance: its spec plus one parameter store, or three for SEQ.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    spec: ArchitectureSpec,
    stores: Vec<ParamStore>,
}

/// Construct a freshly initialised model.
pub fn build_model(spec: &ArchitectureSpec, seed: u64) -> Result<Model> {
    Model::new(spec.clone(), seed)
}

impl Model {
    pub fn new(spec: ArchitectureSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = spec.input_dim;
        let d = spec.latent_dim;
        let hw = &spec.head_widths;
        let stores = match spec.variant {
            Variant::Seq => {
                let widths: Vec<usize> = spec.encoder_widths.iter().copied().chain([d]).chain(hw.iter().copied()).collect();
                let mut stores = Vec::new();
                for stage in SEQ_STAGES {
                    let mut s = ParamStore::new();
                    insert_head(&mut s, &mut rng, stage, m, &widths, 1)?;
                    stores.push(s);
                }
                stores
            }
            Variant::MlpBaseline => {
                let mut s = ParamStore::new();
                insert_dense(&mut s, &mut rng, "base.hidden", m, spec.baseline_hidden)?;
                insert_dense(&mut s, &mut rng, "base.cls", spec.baseline_hidden, 3)?;
                insert_dense(&mut s, &mut rng, "base.reg", spec.baseline_hidden, 1)?;
                vec![s]
            }
            _ => {
                let mut s = ParamStore::new();
                let mut prev = m;
                for (i, &w) in spec.encoder_widths.iter().chain([&d]).enumerate() {
                    insert_dense(&mut s, &mut rng, &format!("enc.{i}"), prev, w)?;
                    prev = w;
                }
                insert_head(&mut s, &mut rng, "dec", d, &spec.decoder_widths(), m)?;
                if spec.hc_enabled {
                    insert_head(&mut s, &mut rng, "mask", d, hw, 1)?;
                    let phase_in = match spec.gate_operand {
                        GateOperand::Latent => d,
                        GateOperand::Features => m,
                    };
                    insert_head(&mut s, &mut rng, "phase", phase_in, hw, 1)?;
                } else {
                    insert_head(&mut s, &mut rng, "cls", d, hw, 3)?;
                }
                if spec.aux_enabled {
                    insert_head(&mut s, &mut rng, "aux", d, hw, 3)?;
                }
                insert_head(&mut s, &mut rng, "reg", d, hw, 1)?;
                if spec.attention_enabled {
                    let h = *hw.last().expect("validated nonempty");
                    for name in ["attn.wq", "attn.wk", "attn.wv", "attn.wz"] {
                        s.insert(name, ParamKind::Weight, xavier_uniform(h, h, &mut rng))?;
                    }
                }
                vec![s]
            }
        };
        Ok(Self { spec, stores })
    }

    pub fn spec(&self) -> &ArchitectureSpec {
        &self.spec
    }

    pub fn variant(&self) -> Variant {
        self.spec.variant
    }

    /// One store, or the three SEQ stage stores in order.
    pub fn stores(&self) -> &[ParamStore] {
        &self.stores
    }

    pub fn stores_mut(&mut self) -> &mut [ParamStore] {
        &mut self.stores
    }

    pub fn parameter_count(&self) -> usize {
        self.stores.iter().map(ParamStore::scalar_count).sum()
    }

    /// Look a parameter up by name across all stores.
    pub fn param_value(&self, name: &str) -> Option<&Matrix> {
        self.stores.iter().find_map(|s| s.get(name)).map(|p| &p.value)
    }

    pub fn set_param(&mut self, name: &str, value: Matrix) -> Result<()> {
        match self.stores.iter_mut().find(|s| s.contains(name)) {
            Some(s) => s.set_value(name, value),
            None => Err(Error::Config(format!("no parameter named {name}"))),
        }
    }

    pub fn zero_grads(&mut self) {
        self.stores.iter_mut().for_each(ParamStore::zero_grads);
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.spec.input_dim {
            return Err(Error::dim(
                "forward",
                format!("{} input columns, model expects {}", x.cols(), self.spec.input_dim),
            ));
        }
        if x.rows() == 0 {
            return Err(Error::Data("forward on zero rows".into()));
        }
        Ok(())
    }

    pub(crate) fn record(&self, x: &Matrix, train_mode: bool) -> Result<Recorded> {
        let stores: Vec<&ParamStore> = self.stores.iter().collect();
        self.record_with(&stores, x, train_mode)
    }

    fn record_with(&self, stores: &[&ParamStore], x: &Matrix, train_mode: bool) -> Result<Recorded> {
        self.check_input(x)?;
        let spec = &self.spec;
        let layers = spec.head_widths.len();
        match spec.variant {
            Variant::Seq => {
                let depth = spec.encoder_widths.len() + 1 + layers;
                let mut t0 = Tape::new();
                let xin = t0.input(x.clone());
                let logit = head(&mut t0, stores[0], SEQ_STAGES[0], depth, xin)?;
                let cloud = t0.sigmoid(logit);
                // later stages see the inputs of predicted-cloudy pixels only
                let mut gated = x.clone();
                for i in 0..gated.rows() {
                    if t0.value(cloud)[(i, 0)] < spec.threshold {
                        gated.row_mut(i).fill(0.0);
                    }
                }
                let mut t1 = Tape::new();
                let g1 = t1.input(gated.clone());
                let logit = head(&mut t1, stores[1], SEQ_STAGES[1], depth, g1)?;
                let liquid = t1.sigmoid(logit);
                let mut t2 = Tape::new();
                let g2 = t2.input(gated);
                let y = head(&mut t2, stores[2], SEQ_STAGES[2], depth, g2)?;
                Ok(Recorded {
                    tapes: vec![t0, t1, t2],
                    classes: ClassHeads::Hierarchical {
                        cloud: (0, cloud),
                        liquid: (1, liquid),
                    },
                    aux: None,
                    y: (2, y),
                    recon: None,
                })
            }
            Variant::MlpBaseline => {
                let mut t = Tape::new();
                let xin = t.input(x.clone());
                let h = dense(&mut t, stores[0], "base.hidden", xin)?;
                let h = t.relu(h);
                let logits = dense(&mut t, stores[0], "base.cls", h)?;
                let flat = t.softmax_rows(logits);
                let y = dense(&mut t, stores[0], "base.reg", h)?;
                Ok(Recorded {
                    tapes: vec![t],
                    classes: ClassHeads::Flat((0, flat)),
                    aux: None,
                    y: (0, y),
                    recon: None,
                })
            }
            _ => self.record_multitask(stores[0], x, train_mode),
        }
    }

    fn record_multitask(&self, store: &ParamStore, x: &Matrix, train_mode: bool) -> Result<Recorded> {
        let spec = &self.spec;
        let layers = spec.head_widths.len();
        let mut t = Tape::new();
        let xin = t.input(x.clone());
        let z = hidden(&mut t, store, "enc", spec.encoder_widths.len() + 1, xin)?;
        let recon = head(&mut t, store, "dec", spec.encoder_widths.len(), z)?;

        let classes = if spec.hc_enabled {
            let logit = head(&mut t, store, "mask", layers, z)?;
            let cloud = t.sigmoid(logit);
            let operand = match spec.gate_operand {
                GateOperand::Latent => z,
                GateOperand::Features => xin,
            };
            let gated = if train_mode && spec.gating_mode == GatingMode::Soft {
                t.scale_rows(operand, cloud)?
            } else {
                let labels = t.value(cloud).data().iter().map(|&u| f64::from(u8::from(u >= spec.threshold))).collect();
                t.mask_rows(operand, labels)?
            };
            let logit = head(&mut t, store, "phase", layers, gated)?;
            let liquid = t.sigmoid(logit);
            ClassHeads::Hierarchical {
                cloud: (0, cloud),
                liquid: (0, liquid),
            }
        } else {
            let logits = head(&mut t, store, "cls", layers, z)?;
            ClassHeads::Flat((0, t.softmax_rows(logits)))
        };

        let mut theta2 = None;
        let aux = if spec.aux_enabled {
            let a = hidden(&mut t, store, "aux", layers, z)?;
            theta2 = Some(a);
            let logits = dense(&mut t, store, "aux.out", a)?;
            Some((0, t.softmax_rows(logits)))
        } else {
            None
        };

        let theta1 = hidden(&mut t, store, "reg", layers, z)?;
        let trunk = match (spec.attention_enabled, theta2) {
            (true, Some(theta2)) => {
                let p = |t: &mut Tape, name: &str| -> Result<Var> {
                    let id = store
                        .id(name)
                        .ok_or_else(|| Error::State(format!("parameter {name} missing")))?;
                    Ok(t.param(store, id))
                };
                let (wq, wk, wv, wz) = (p(&mut t, "attn.wq")?, p(&mut t, "attn.wk")?, p(&mut t, "attn.wv")?, p(&mut t, "attn.wz")?);
                let q = t.matmul_t(theta2, wq)?;
                let k = t.matmul_t(theta1, wk)?;
                let v = t.matmul_t(theta1, wv)?;
                let ya = t.attend(q, k, v)?;
                let proj = t.matmul_t(ya, wz)?;
                t.add(proj, theta1)?
            }
            _ => theta1,
        };
        let y = dense(&mut t, store, "reg.out", trunk)?;

        Ok(Recorded {
            tapes: vec![t],
            classes,
            aux,
            y: (0, y),
            recon: Some((0, recon)),
        })
    }

    pub(crate) fn outputs_of(&self, rec: &Recorded) -> ModelOutputs {
        let (u_cloud, u_clear, u_liquid, u_ice) = match rec.classes {
            ClassHeads::Hierarchical { cloud, liquid } => {
                let c = rec.value(cloud).data();
                let l = rec.value(liquid).data();
                (
                    c.iter().map(|&u| clamp_prob(u)).collect(),
                    c.iter().map(|&u| clamp_prob(1.0 - u)).collect(),
                    l.iter().map(|&u| clamp_prob(u)).collect(),
                    l.iter().map(|&u| clamp_prob(1.0 - u)).collect(),
                )
            }
            ClassHeads::Flat(flat) => {
                let s = rec.value(flat);
                let n = s.rows();
                (
                    (0..n).map(|i| clamp_prob(s[(i, 1)] + s[(i, 2)])).collect(),
                    (0..n).map(|i| clamp_prob(s[(i, 0)])).collect(),
                    (0..n).map(|i| clamp_prob(s[(i, 1)])).collect(),
                    (0..n).map(|i| clamp_prob(s[(i, 2)])).collect(),
                )
            }
        };
        ModelOutputs {
            u_cloud,
            u_clear,
            u_liquid,
            u_ice,
            thickness: rec.aux.map(|a| rec.value(a).clone()),
            y_cot_hat: rec.value(rec.y).data().to_vec(),
            x_recon: rec.recon.map(|r| rec.value(r).clone()),
            phase_conditional: self.spec.variant.phase_is_conditional(),
        }
    }

    /// Forward pass. `train_mode` selects the training-time gate.
    pub fn forward(&self, x: &Matrix, train_mode: bool) -> Result<ModelOutputs> {
        let rec = self.record(x, train_mode)?;
        Ok(self.outputs_of(&rec))
    }

    /// Push output gradients back through the recorded tapes.
    fn backprop(&mut self, rec: &Recorded, g: &OutputGrads) -> Result<()> {
        // gradient passes a clamp only where the clamp was inactive
        let live = |p: f64| f64::from(u8::from((PROB_EPS..=1.0 - PROB_EPS).contains(&p)));
        let mut seeds: Vec<Vec<((usize, Var), Matrix)>> = vec![Vec::new(); rec.tapes.len()];
        let mut push = |at: (usize, Var), m: Matrix| seeds[at.0].push((at, m));

        match rec.classes {
            ClassHeads::Hierarchical { cloud, liquid } => {
                let c = rec.value(cloud).data();
                let seed: Vec<f64> = c
                    .iter()
                    .enumerate()
                    .map(|(i, &u)| g.cloud[i] * live(u) - g.clear[i] * live(1.0 - u))
                    .collect();
                push(cloud, Matrix::column(seed));
                let l = rec.value(liquid).data();
                let seed: Vec<f64> = l
                    .iter()
                    .enumerate()
                    .map(|(i, &u)| g.liquid[i] * live(u) - g.ice[i] * live(1.0 - u))
                    .collect();
                push(liquid, Matrix::column(seed));
            }
            ClassHeads::Flat(flat) => {
                let s = rec.value(flat);
                let mut seed = Matrix::zeros(s.rows(), 3);
                for i in 0..s.rows() {
                    let cloudy = g.cloud[i] * live(s[(i, 1)] + s[(i, 2)]);
                    seed[(i, 0)] = g.clear[i] * live(s[(i, 0)]);
                    seed[(i, 1)] = cloudy + g.liquid[i] * live(s[(i, 1)]);
                    seed[(i, 2)] = cloudy + g.ice[i] * live(s[(i, 2)]);
                }
                push(flat, seed);
            }
        }
        if let (Some(a), Some(gt)) = (rec.aux, g.thickness.as_ref()) {
            push(a, gt.clone());
        }
        push(rec.y, Matrix::column(g.y.clone()));
        if let (Some(r), Some(gr)) = (rec.recon, g.recon.as_ref()) {
            push(r, gr.clone());
        }

        for ((tape, store), s) in rec.tapes.iter().zip(self.stores.iter_mut()).zip(&seeds) {
            let refs: Vec<(Var, &Matrix)> = s.iter().map(|((_, v), m)| (*v, m)).collect();
            tape.backward(&refs, store)?;
        }
        Ok(())
    }

    /// Training-mode forward, loss and backward on one batch. Gradients are
    /// added to the stores (zero them first); the lasso subgradient included.
    pub fn accumulate_gradients(
        &mut self,
        x: &Matrix,
        labels: &[CloudLabel],
        cot: &[Option<f64>],
        lambda: f64,
    ) -> Result<LossBreakdown> {
        let rec = self.record(x, true)?;
        let out = self.outputs_of(&rec);
        let (b, g) = data_loss(&self.spec, &out, x, labels, cot)?;
        self.backprop(&rec, &g)?;
        let mut l1 = 0.0;
        for s in &mut self.stores {
            s.add_l1_grad(lambda);
            l1 += s.weight_l1();
        }
        Ok(LossBreakdown::from_terms(b.l_cmask, b.l_cphase, b.l_reg, b.l_caux, b.l_rec, lambda * l1))
    }

    /// Training-mode composite loss without gradients.
    pub fn loss(&self, x: &Matrix, labels: &[CloudLabel], cot: &[Option<f64>], lambda: f64) -> Result<LossBreakdown> {
        let out = self.forward(x, true)?;
        super::compute_loss(&self.spec, &out, x, labels, cot, &self.stores, lambda)
    }

    /// Total loss with store `index` replaced by `store`, for finite
    /// differences.
    pub fn loss_with_store(
        &self,
        index: usize,
        store: &ParamStore,
        x: &Matrix,
        labels: &[CloudLabel],
        cot: &[Option<f64>],
        lambda: f64,
    ) -> Result<f64> {
        let mut stores: Vec<&ParamStore> = self.stores.iter().collect();
        *stores
            .get_mut(index)
            .ok_or_else(|| Error::Config(format!("no parameter store {index}")))? = store;
        let rec = self.record_with(&stores, x, true)?;
        let out = self.outputs_of(&rec);
        let (b, _) = data_loss(&self.spec, &out, x, labels, cot)?;
        let l1: f64 = stores.iter().map(|s| s.weight_l1()).sum();
        Ok(b.total + lambda * l1)
    }
}

//! Differentiable building blocks shared by the enrollment model: sparse
//! visit embedding, a bidirectional recurrent encoder with attention
//! pooling for patient histories, and the categorical/text fusion that
//! produces a trial query embedding.

use numcore::{full_param, xavier_uniform, xavier_uniform_vec, zeros_param, ParamSet64, Tape64, Tensor64};
use rand::Rng;

use crate::error::Result;

/// Multi-layer perceptron with ELU between layers and a linear last
/// layer. `widths` includes the output width.
pub struct Mlp {
    layers: Vec<(Tensor64, Tensor64)>,
}

impl Mlp {
    pub fn new<R: Rng>(
        params: &mut ParamSet64,
        rng: &mut R,
        prefix: &str,
        in_dim: usize,
        widths: &[usize],
    ) -> Result<Self> {
        let mut layers = Vec::with_capacity(widths.len());
        let mut prev = in_dim;
        for (i, &w) in widths.iter().enumerate() {
            let weight = params.register(&format!("{prefix}.l{i}.w"), xavier_uniform(rng, w, prev)?)?;
            let bias = params.register(&format!("{prefix}.l{i}.b"), zeros_param(vec![w]))?;
            layers.push((weight, bias));
            prev = w;
        }
        Ok(Self { layers })
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map(|(w, _)| w.dims()[0]).unwrap_or(0)
    }

    pub fn forward(&self, tape: &Tape64, x: &Tensor64) -> Result<Tensor64> {
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, (w, b)) in self.layers.iter().enumerate() {
            h = tape.affine(w, &h, b)?;
            if i < last {
                h = tape.elu(&h)?;
            }
        }
        Ok(h)
    }

    /// Forward pass where the input is a multi-hot vector given by its
    /// active indices; the first layer contracts via column sums so the
    /// input vector is never materialized.
    pub fn forward_indices(&self, tape: &Tape64, active: &[usize]) -> Result<Tensor64> {
        let (w0, b0) = &self.layers[0];
        let mut h = tape.add(&tape.cols_sum(w0, active)?, b0)?;
        let last = self.layers.len() - 1;
        if last > 0 {
            h = tape.elu(&h)?;
        }
        for (i, (w, b)) in self.layers.iter().enumerate().skip(1) {
            h = tape.affine(w, &h, b)?;
            if i < last {
                h = tape.elu(&h)?;
            }
        }
        Ok(h)
    }
}

/// One direction of a recurrent encoder. Gate order in the fused
/// parameter block is input, forget, cell, output.
pub struct LstmCell {
    wx: Tensor64,
    uh: Tensor64,
    b: Tensor64,
    hidden: usize,
}

impl LstmCell {
    pub fn new<R: Rng>(
        params: &mut ParamSet64,
        rng: &mut R,
        prefix: &str,
        in_dim: usize,
        hidden: usize,
    ) -> Result<Self> {
        let wx = params.register(&format!("{prefix}.wx"), xavier_uniform(rng, 4 * hidden, in_dim)?)?;
        let uh = params.register(&format!("{prefix}.uh"), xavier_uniform(rng, 4 * hidden, hidden)?)?;
        // forget gate starts open so early state carries across steps
        let mut bias = vec![0.0; 4 * hidden];
        bias[hidden..2 * hidden].fill(1.0);
        let b = params.register(&format!("{prefix}.b"), Tensor64::param(vec![4 * hidden], bias)?)?;
        Ok(Self { wx, uh, b, hidden })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    /// One step. `prev` is (h, c); the first step omits the recurrent
    /// term entirely rather than multiplying by a zero state.
    pub fn step(
        &self,
        tape: &Tape64,
        x: &Tensor64,
        prev: Option<(&Tensor64, &Tensor64)>,
    ) -> Result<(Tensor64, Tensor64)> {
        let mut pre = tape.affine(&self.wx, x, &self.b)?;
        if let Some((h, _)) = prev {
            pre = tape.add(&pre, &tape.matvec(&self.uh, h)?)?;
        }
        let d = self.hidden;
        let gate_i = tape.sigmoid(&tape.slice(&pre, 0, d)?)?;
        let gate_f = tape.sigmoid(&tape.slice(&pre, d, d)?)?;
        let gate_g = tape.tanh(&tape.slice(&pre, 2 * d, d)?)?;
        let gate_o = tape.sigmoid(&tape.slice(&pre, 3 * d, d)?)?;
        let mut c = tape.mul(&gate_i, &gate_g)?;
        if let Some((_, c_prev)) = prev {
            c = tape.add(&c, &tape.mul(&gate_f, c_prev)?)?;
        }
        let h = tape.mul(&gate_o, &tape.tanh(&c)?)?;
        Ok((h, c))
    }

    /// Hidden states for a full sequence, in input order.
    pub fn run(&self, tape: &Tape64, xs: &[Tensor64]) -> Result<Vec<Tensor64>> {
        let mut out = Vec::with_capacity(xs.len());
        let mut state: Option<(Tensor64, Tensor64)> = None;
        for x in xs {
            let (h, c) = self.step(tape, x, state.as_ref().map(|(h, c)| (h, c)))?;
            out.push(h.clone());
            state = Some((h, c));
        }
        Ok(out)
    }
}

/// Bidirectional encoder: per position, the forward and backward hidden
/// states concatenated, so the output width is twice the cell width.
pub struct BiLstm {
    fw: LstmCell,
    bw: LstmCell,
}

impl BiLstm {
    pub fn new<R: Rng>(
        params: &mut ParamSet64,
        rng: &mut R,
        prefix: &str,
        in_dim: usize,
        hidden: usize,
    ) -> Result<Self> {
        let fw = LstmCell::new(params, rng, &format!("{prefix}.fw"), in_dim, hidden)?;
        let bw = LstmCell::new(params, rng, &format!("{prefix}.bw"), in_dim, hidden)?;
        Ok(Self { fw, bw })
    }

    pub fn out_dim(&self) -> usize {
        2 * self.fw.hidden()
    }

    pub fn forward(&self, tape: &Tape64, xs: &[Tensor64]) -> Result<Vec<Tensor64>> {
        let fw = self.fw.run(tape, xs)?;
        let rev: Vec<Tensor64> = xs.iter().rev().cloned().collect();
        let mut bw = self.bw.run(tape, &rev)?;
        bw.reverse();
        fw.iter()
            .zip(&bw)
            .map(|(f, b)| Ok(tape.concat(&[f.clone(), b.clone()])?))
            .collect()
    }
}

/// Additive attention pooling: position scores w.x_t + b, softmax over
/// positions, output the score-weighted sum of the inputs.
pub struct AttentionPool {
    w: Tensor64,
    b: Tensor64,
    in_dim: usize,
}

impl AttentionPool {
    pub fn new<R: Rng>(
        params: &mut ParamSet64,
        rng: &mut R,
        prefix: &str,
        in_dim: usize,
    ) -> Result<Self> {
        let w = params.register(&format!("{prefix}.w"), xavier_uniform_vec(rng, in_dim)?)?;
        let b = params.register(&format!("{prefix}.b"), zeros_param(vec![1]))?;
        Ok(Self { w, b, in_dim })
    }

    /// Returns (pooled vector, attention weights over positions).
    pub fn forward(&self, tape: &Tape64, xs: &[Tensor64]) -> Result<(Tensor64, Tensor64)> {
        let t = xs.len();
        let d = self.in_dim;
        // rows [x_t, 1]: one matvec scores every position, and the same
        // matrix reused against the weights recovers the weighted sum
        let one = Tensor64::constant(vec![1], vec![1.0])?;
        let mut parts = Vec::with_capacity(2 * t);
        for x in xs {
            parts.push(x.clone());
            parts.push(one.clone());
        }
        let rows = tape.reshape(&tape.concat(&parts)?, vec![t, d + 1])?;
        let w_aug = tape.concat(&[self.w.clone(), self.b.clone()])?;
        let scores = tape.matvec(&rows, &w_aug)?;
        let alpha = tape.softmax(&scores)?;
        let pooled_aug = tape.reshape(
            &tape.matmul(&tape.reshape(&alpha, vec![1, t])?, &rows)?,
            vec![d + 1],
        )?;
        let pooled = tape.slice(&pooled_aug, 0, d)?;
        Ok((pooled, alpha))
    }
}

/// Patient history encoder: each visit's codes embed linearly through a
/// shared matrix, the visit sequence runs through the bidirectional
/// encoder, and attention pooling condenses it to one vector per patient.
pub struct PatientEncoder {
    w_emb: Tensor64,
    lstm: BiLstm,
    attn: AttentionPool,
}

impl PatientEncoder {
    pub fn new<R: Rng>(
        params: &mut ParamSet64,
        rng: &mut R,
        visit_dim: usize,
        embed_dim: usize,
        hidden: usize,
    ) -> Result<Self> {
        let w_emb = params.register("visit.w_emb", xavier_uniform(rng, embed_dim, visit_dim)?)?;
        let lstm = BiLstm::new(params, rng, "patient.lstm", embed_dim, hidden)?;
        let attn = AttentionPool::new(params, rng, "patient.attn", 2 * hidden)?;
        Ok(Self { w_emb, lstm, attn })
    }

    pub fn out_dim(&self) -> usize {
        self.lstm.out_dim()
    }

    pub fn embed_visit(&self, tape: &Tape64, codes: &[usize]) -> Result<Tensor64> {
        Ok(tape.cols_sum(&self.w_emb, codes)?)
    }

    /// Encodes one patient's visit sequence (each visit given by its
    /// active code indices in the concatenated vocabulary) into a single
    /// vector plus per-visit attention weights.
    pub fn encode(&self, tape: &Tape64, visits: &[Vec<usize>]) -> Result<(Tensor64, Tensor64)> {
        let embedded: Vec<Tensor64> = visits
            .iter()
            .map(|v| self.embed_visit(tape, v))
            .collect::<Result<_>>()?;
        let states = self.lstm.forward(tape, &embedded)?;
        self.attn.forward(tape, &states)
    }
}

/// Trial encoder: categorical attributes pass through an MLP, the text
/// embedding through a linear map, and the two project to a common width
/// where they gate each other elementwise.
pub struct TrialEncoder {
    cat_mlp: Mlp,
    w_cat: Tensor64,
    b_cat: Tensor64,
    w_text: Tensor64,
    b_text: Tensor64,
}

impl TrialEncoder {
    pub fn new<R: Rng>(
        params: &mut ParamSet64,
        rng: &mut R,
        cat_dim: usize,
        cat_widths: &[usize],
        text_dim: usize,
        out_dim: usize,
    ) -> Result<Self> {
        let cat_mlp = Mlp::new(params, rng, "trial.cat", cat_dim, cat_widths)?;
        let cat_out = cat_mlp.out_dim();
        let w_cat = params.register("trial.fuse.w_cat", xavier_uniform(rng, out_dim, cat_out)?)?;
        // the categorical gate starts near one so the product fusion
        // passes the text projection through at a usable scale
        let b_cat = params.register("trial.fuse.b_cat", full_param(vec![out_dim], 1.0)?)?;
        let w_text = params.register("trial.fuse.w_text", xavier_uniform(rng, out_dim, text_dim)?)?;
        let b_text = params.register("trial.fuse.b_text", zeros_param(vec![out_dim]))?;
        Ok(Self { cat_mlp, w_cat, b_cat, w_text, b_text })
    }

    pub fn out_dim(&self) -> usize {
        self.w_cat.dims()[0]
    }

    /// `cat_active` holds the active indices of the concatenated one-hot
    /// attribute encoding; `text` is the precomputed text embedding.
    pub fn encode(&self, tape: &Tape64, cat_active: &[usize], text: &[f64]) -> Result<Tensor64> {
        let cat = self.cat_mlp.forward_indices(tape, cat_active)?;
        let text_t = Tensor64::constant(vec![text.len()], text.to_vec())?;
        let lhs = tape.affine(&self.w_cat, &cat, &self.b_cat)?;
        let rhs = tape.affine(&self.w_text, &text_t, &self.b_text)?;
        Ok(tape.mul(&lhs, &rhs)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(42)
    }

    #[test]
    fn mlp_shapes_and_determinism() {
        let mut ps = ParamSet64::new();
        let mlp = Mlp::new(&mut ps, &mut rng(), "m", 6, &[5, 4, 3]).unwrap();
        assert_eq!(mlp.out_dim(), 3);
        assert_eq!(ps.len(), 6);
        let x = Tensor64::constant(vec![6], vec![0.1, -0.2, 0.3, 0.0, 1.0, -1.0]).unwrap();
        let tape = Tape64::new();
        let y = mlp.forward(&tape, &x).unwrap();
        assert_eq!(y.dims(), &[3]);

        let mut ps2 = ParamSet64::new();
        let mlp2 = Mlp::new(&mut ps2, &mut rng(), "m", 6, &[5, 4, 3]).unwrap();
        let tape2 = Tape64::new();
        let y2 = mlp2.forward(&tape2, &x).unwrap();
        assert_eq!(y.values(), y2.values());
    }

    #[test]
    fn mlp_index_forward_matches_dense_forward() {
        let mut ps = ParamSet64::new();
        let mlp = Mlp::new(&mut ps, &mut rng(), "m", 5, &[4, 3]).unwrap();
        let mut dense = vec![0.0; 5];
        dense[1] = 1.0;
        dense[4] = 1.0;
        let tape = Tape64::new();
        let a = mlp.forward(&tape, &Tensor64::constant(vec![5], dense).unwrap()).unwrap();
        let b = mlp.forward_indices(&tape, &[1, 4]).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn lstm_first_step_ignores_recurrent_weights() {
        let mut ps = ParamSet64::new();
        let cell = LstmCell::new(&mut ps, &mut rng(), "c", 3, 2).unwrap();
        let x = Tensor64::constant(vec![3], vec![0.5, -0.5, 1.0]).unwrap();
        let tape = Tape64::new();
        let (h, c) = cell.step(&tape, &x, None).unwrap();
        assert_eq!(h.dims(), &[2]);
        assert_eq!(c.dims(), &[2]);
        // same inputs with an explicit zero state must agree
        let zeros_h = Tensor64::constant(vec![2], vec![0.0, 0.0]).unwrap();
        let zeros_c = Tensor64::constant(vec![2], vec![0.0, 0.0]).unwrap();
        let (h2, _) = cell.step(&tape, &x, Some((&zeros_h, &zeros_c))).unwrap();
        for (a, b) in h.values().iter().zip(h2.values()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn bilstm_output_concatenates_directions() {
        let mut ps = ParamSet64::new();
        let net = BiLstm::new(&mut ps, &mut rng(), "b", 3, 2).unwrap();
        assert_eq!(net.out_dim(), 4);
        let xs: Vec<Tensor64> = (0..3)
            .map(|i| Tensor64::constant(vec![3], vec![i as f64, 0.1, -0.1]).unwrap())
            .collect();
        let tape = Tape64::new();
        let out = net.forward(&tape, &xs).unwrap();
        assert_eq!(out.len(), 3);
        assert!(out.iter().all(|g| g.dims() == [4]));
    }

    #[test]
    fn bilstm_directions_have_opposite_causality() {
        let mut ps = ParamSet64::new();
        let net = BiLstm::new(&mut ps, &mut rng(), "b", 2, 3).unwrap();
        let mk = |last: f64| {
            vec![
                Tensor64::constant(vec![2], vec![0.3, -0.2]).unwrap(),
                Tensor64::constant(vec![2], vec![0.9, 0.1]).unwrap(),
                Tensor64::constant(vec![2], vec![last, 0.8]).unwrap(),
            ]
        };
        let tape = Tape64::new();
        let a = net.forward(&tape, &mk(-0.4)).unwrap();
        let b = net.forward(&tape, &mk(0.6)).unwrap();
        // changing only the last input: the forward half of position 0
        // cannot see it, the backward half must
        assert_eq!(a[0].values()[..3], b[0].values()[..3]);
        assert_ne!(a[0].values()[3..], b[0].values()[3..]);
        // and position 2's forward half must see it
        assert_ne!(a[2].values()[..3], b[2].values()[..3]);
    }

    #[test]
    fn attention_weights_sum_to_one() {
        let mut ps = ParamSet64::new();
        let pool = AttentionPool::new(&mut ps, &mut rng(), "a", 3).unwrap();
        let xs: Vec<Tensor64> = (0..4)
            .map(|i| Tensor64::constant(vec![3], vec![i as f64 * 0.3, -0.1, 0.5]).unwrap())
            .collect();
        let tape = Tape64::new();
        let (pooled, alpha) = pool.forward(&tape, &xs).unwrap();
        assert_eq!(pooled.dims(), &[3]);
        assert_eq!(alpha.dims(), &[4]);
        let s: f64 = alpha.values().iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        // pooled must be the alpha-weighted sum of inputs
        let av = alpha.values();
        for j in 0..3 {
            let want: f64 = xs.iter().zip(&av).map(|(x, a)| a * x.values()[j]).sum();
            assert!((pooled.values()[j] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn single_position_attention_is_identity() {
        let mut ps = ParamSet64::new();
        let pool = AttentionPool::new(&mut ps, &mut rng(), "a", 2).unwrap();
        let x = Tensor64::constant(vec![2], vec![0.7, -0.3]).unwrap();
        let tape = Tape64::new();
        let (pooled, alpha) = pool.forward(&tape, std::slice::from_ref(&x)).unwrap();
        assert_eq!(alpha.values(), vec![1.0]);
        for (a, b) in pooled.values().iter().zip(x.values()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn patient_encoder_end_to_end_shapes() {
        let mut ps = ParamSet64::new();
        let enc = PatientEncoder::new(&mut ps, &mut rng(), 10, 4, 3).unwrap();
        assert_eq!(enc.out_dim(), 6);
        let visits = vec![vec![0, 3, 7], vec![2], vec![5, 9]];
        let tape = Tape64::new();
        let (vec_out, alpha) = enc.encode(&tape, &visits).unwrap();
        assert_eq!(vec_out.dims(), &[6]);
        assert_eq!(alpha.dims(), &[3]);
    }

    #[test]
    fn trial_encoder_fuses_to_requested_width() {
        let mut ps = ParamSet64::new();
        let enc = TrialEncoder::new(&mut ps, &mut rng(), 9, &[6, 5], 8, 4).unwrap();
        assert_eq!(enc.out_dim(), 4);
        let text = vec![0.1; 8];
        let tape = Tape64::new();
        let q = enc.encode(&tape, &[0, 4, 8], &text).unwrap();
        assert_eq!(q.dims(), &[4]);
        // zero text embedding gates everything off only if b_text is
        // zero, which it is at init
        let q0 = enc.encode(&tape, &[0, 4, 8], &vec![0.0; 8]).unwrap();
        assert!(q0.values().iter().all(|&v| v == 0.0));
    }
}

// scratch probe: expressivity ceiling of the affine head over simulated
// perfect-attention readouts, bypassing the learned encoders.
use std::collections::BTreeMap;

use doctor2vec::data::split_trial_disjoint;
use doctor2vec::evalx::macro_pr_auc;
use doctor2vec::syngen::{generate_corpus, GenConfig};
use numcore::{AdamConfig, AdamState, ParamSet64, Tape64, Tensor64};

fn main() {
    let gc = GenConfig::default();
    let gen = generate_corpus(&gc).expect("generate");
    let corpus = &gen.corpus;
    let n_topics = gen.topic_model.n_topics;
    let split = split_trial_disjoint(corpus, (0.7, 0.2, 0.1), gc.seed).expect("split");

    // per-patient empirical topic fractions from owned codes
    let mut panel: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
    for d in &corpus.doctors {
        let mut ps = Vec::new();
        for p in &d.patients {
            let mut counts = vec![0.0f64; n_topics];
            for v in &p.visits {
                for &c in v.dx.iter().chain(&v.px).chain(&v.rx) {
                    counts[c % n_topics] += 1.0;
                }
            }
            let s: f64 = counts.iter().sum();
            if s > 0.0 {
                for x in &mut counts {
                    *x /= s;
                }
            }
            ps.push(counts);
        }
        panel.insert(d.doctor_id.clone(), ps);
    }

    for gamma in [0.0, 4.0, 10.0, 25.0] {
        // features: years, specialty one-hot, trial vector, readout
        let feat_dim = 1 + n_topics + n_topics + n_topics;
        let build = |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<u8>) {
            let mut xs = Vec::with_capacity(idx.len());
            let mut ys = Vec::with_capacity(idx.len());
            for &i in idx {
                let s = &corpus.samples[i];
                let d = corpus.doctor(&s.doctor_id).unwrap();
                let v = &gen.topic_model.trial_vectors[&s.trial_id];
                let ps = &panel[&s.doctor_id];
                let scores: Vec<f64> = ps
                    .iter()
                    .map(|th| gamma * th.iter().zip(v).map(|(a, b)| a * b).sum::<f64>())
                    .collect();
                let m = scores.iter().cloned().fold(f64::MIN, f64::max);
                let ws: Vec<f64> = scores.iter().map(|x| (x - m).exp()).collect();
                let z: f64 = ws.iter().sum();
                let mut readout = vec![0.0f64; n_topics];
                for (w, th) in ws.iter().zip(ps) {
                    for (r, t) in readout.iter_mut().zip(th) {
                        *r += w / z * t;
                    }
                }
                let mut row = Vec::with_capacity(feat_dim);
                row.push(d.static_features[0]);
                row.extend_from_slice(&d.static_features[1..1 + n_topics]);
                row.extend_from_slice(v);
                row.extend_from_slice(&readout);
                xs.push(row);
                ys.push(s.label.bin);
            }
            (xs, ys)
        };
        let (xtr, ytr) = build(&split.train);
        let (xte, yte) = build(&split.test);

        let mut params = ParamSet64::new();
        let w = params
            .register("w", Tensor64::param(vec![5, feat_dim], vec![0.0; 5 * feat_dim]).unwrap())
            .unwrap();
        let b = params.register("b", Tensor64::param(vec![5], vec![0.0; 5]).unwrap()).unwrap();
        let mut adam = AdamState::new(
            &params,
            AdamConfig { learning_rate: 0.05, ..AdamConfig::default() },
        );
        let onehot = |y: u8| {
            let mut t = vec![0.0; 5];
            t[y as usize] = 1.0;
            t
        };
        let mut last = 0.0;
        for _ in 0..300 {
            let tape = Tape64::new();
            let mut losses = Vec::with_capacity(ytr.len());
            for (row, &y) in xtr.iter().zip(&ytr) {
                let x = Tensor64::constant(vec![feat_dim], row.clone()).unwrap();
                let p = tape.softmax(&tape.affine(&w, &x, &b).unwrap()).unwrap();
                let t = Tensor64::constant(vec![5], onehot(y)).unwrap();
                losses.push(tape.cross_entropy(&p, &t).unwrap());
            }
            let loss = tape.mean(&tape.concat(&losses).unwrap()).unwrap();
            last = loss.item();
            tape.backward(&loss).unwrap();
            adam.step(&params).unwrap();
        }
        let tape = Tape64::new();
        let mut rows = Vec::with_capacity(yte.len());
        for row in &xte {
            let x = Tensor64::constant(vec![feat_dim], row.clone()).unwrap();
            let p = tape.softmax(&tape.affine(&w, &x, &b).unwrap()).unwrap();
            rows.push(p.values());
        }
        let auc = macro_pr_auc(&rows, &yte, 5).unwrap();
        println!("gamma {gamma:5.1}  train_ce {last:.4}  test macro pr_auc {auc:.4}");
    }
}

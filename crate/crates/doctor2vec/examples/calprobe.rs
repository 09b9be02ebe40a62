//! Offline calibration probe for the breadth-mixture generator redesign.
//!
//! 1. Monte-Carlo refit of the cosine quantile knots.
//! 2. Cluster-shaped affinity marginal, refit by quantile warping until the
//!    simulated pipeline hits the target bin histogram.
//! 3. Empirical Bayes ceilings: full oracle, doctor-only, doctor+rank.

use doctor2vec::evalx::{macro_pr_auc, pr_auc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const K: usize = 8;
const DECAY: f64 = 0.5;
const FOCUS_MAX: f64 = 0.85;
const NOISE: f64 = 0.05;
const POOL: usize = 40;
const N_DOCTORS: usize = 200;
const N_TRIALS: usize = 50;
const TARGET_CUM: [f64; 4] = [0.12, 0.45, 0.82, 0.94];

fn profile() -> Vec<f64> {
    let mut p: Vec<f64> = (0..K).map(|i| DECAY.powi(i as i32)).collect();
    let s: f64 = p.iter().sum();
    for x in &mut p {
        *x /= s;
    }
    p
}

fn cos_for(beta: f64, rank_weight: f64, c_v: f64) -> f64 {
    let kf = K as f64;
    let num = (1.0 - beta) / kf + beta * rank_weight;
    let den = c_v * ((1.0 - beta * beta) / kf + beta * beta).sqrt();
    (num / den).clamp(0.0, 1.0)
}

fn affinity(cos: f64, knots: &[f64], aff: &[f64]) -> f64 {
    let c = cos.clamp(0.0, 1.0);
    match knots.partition_point(|&k| k <= c) {
        0 => aff[0],
        i if i >= knots.len() => aff[aff.len() - 1],
        i => {
            let (x0, x1) = (knots[i - 1], knots[i]);
            let (y0, y1) = (aff[i - 1], aff[i]);
            y0 + (y1 - y0) * (c - x0) / (x1 - x0)
        }
    }
}

/// evaluate the quantile curve (values on the uniform grid) at percentile p
fn q_eval(aff: &[f64], p: f64) -> f64 {
    let n = aff.len() - 1;
    let t = (p.clamp(0.0, 1.0)) * n as f64;
    let i = (t.floor() as usize).min(n - 1);
    aff[i] + (aff[i + 1] - aff[i]) * (t - i as f64)
}

fn bin_of(u: f64) -> usize {
    if u < 0.2 {
        0
    } else if u < 0.4 {
        1
    } else if u < 0.6 {
        2
    } else if u < 0.8 {
        3
    } else {
        4
    }
}

struct Rep {
    /// per sample: (x of doctor, rank, affinity, bin)
    samples: Vec<(f64, usize, f64, usize)>,
    hist: [usize; 5],
}

fn simulate_rep(rng: &mut ChaCha8Rng, knots: &[f64], aff: &[f64], prof: &[f64], c_v: f64) -> Rep {
    let doctors: Vec<(f64, usize)> = (0..N_DOCTORS)
        .map(|_| (rng.gen::<f64>(), rng.gen_range(0..K)))
        .collect();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut samples = Vec::new();
    let mut hist = [0usize; 5];
    for _ in 0..N_TRIALS {
        let mut perm: Vec<usize> = (0..K).collect();
        for k in (1..K).rev() {
            perm.swap(k, rng.gen_range(0..=k));
        }
        let mut rank_of = vec![0usize; K];
        for (rank, &topic) in perm.iter().enumerate() {
            rank_of[topic] = rank;
        }
        let mut pool: Vec<usize> = (0..N_DOCTORS).collect();
        for k in 0..POOL {
            let pick = rng.gen_range(k..pool.len());
            pool.swap(k, pick);
        }
        let mut rates = Vec::with_capacity(POOL);
        let mut meta = Vec::with_capacity(POOL);
        for &di in &pool[..POOL] {
            let (x, spec) = doctors[di];
            let beta = FOCUS_MAX * x;
            let rank = rank_of[spec];
            let a = affinity(cos_for(beta, prof[rank], c_v), knots, aff);
            let raw = (a + NOISE * normal.sample(rng)).clamp(0.0, 1.0);
            let rate = (raw * 1000.0).round() / 1000.0;
            rates.push(rate);
            meta.push((x, rank, a));
        }
        let min = rates.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = rates.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for (i, &r) in rates.iter().enumerate() {
            let u = if max > min { (r - min) / (max - min) } else { 0.5 };
            let b = bin_of(u);
            hist[b] += 1;
            let (x, rank, a) = meta[i];
            samples.push((x, rank, a, b));
        }
    }
    Rep { samples, hist }
}

const RANGES: [(f64, f64); 5] = [
    (0.000, 0.030),
    (0.285, 0.315),
    (0.460, 0.490),
    (0.695, 0.725),
    (0.960, 1.000),
];

/// five narrow value clusters, one per target bin; cluster percentile
/// boundaries are the free calibration parameters
fn build_aff(bounds: &[f64; 4]) -> Vec<f64> {
    let cum = [0.0, bounds[0], bounds[1], bounds[2], bounds[3], 1.0];
    let mut aff = Vec::with_capacity(89);
    for i in 0..=88 {
        let p = i as f64 / 88.0;
        let c = (0..5).find(|&c| p <= cum[c + 1]).unwrap_or(4);
        let t = (p - cum[c]) / (cum[c + 1] - cum[c]);
        let (lo, hi) = RANGES[c];
        aff.push(lo + (hi - lo) * t);
    }
    aff[0] = 0.0;
    aff[88] = 1.0;
    aff
}

fn main() {
    let prof = profile();
    let c_v = prof.iter().map(|p| p * p).sum::<f64>().sqrt();

    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let n = 4_000_000usize;
    let mut cosines: Vec<f64> = (0..n)
        .map(|_| {
            let beta = FOCUS_MAX * rng.gen::<f64>();
            let rank = rng.gen_range(0..K);
            cos_for(beta, prof[rank], c_v)
        })
        .collect();
    cosines.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut knots = vec![0.0f64];
    for i in 1..88 {
        let idx = ((i as f64 / 88.0) * (n - 1) as f64).round() as usize;
        knots.push(cosines[idx]);
    }
    knots.push(1.0);
    let strict = knots.windows(2).all(|w| w[0] < w[1]);
    println!("knots strictly increasing: {strict}");

    let aff = build_aff(&TARGET_CUM);
    {
        let mut hist = [0usize; 5];
        let mut total = 0usize;
        let mut per_rep = Vec::new();
        for _ in 0..100 {
            let rep = simulate_rep(&mut rng, &knots, &aff, &prof, c_v);
            let rep_total: usize = rep.hist.iter().sum();
            per_rep.push(std::array::from_fn::<f64, 5, _>(|b| {
                rep.hist[b] as f64 / rep_total as f64
            }));
            for b in 0..5 {
                hist[b] += rep.hist[b];
            }
            total += rep_total;
        }
        let emp: Vec<f64> = hist.iter().map(|&h| h as f64 / total as f64).collect();
        println!(
            "bins mean {:.3} {:.3} {:.3} {:.3} {:.3}  target 0.120 0.330 0.370 0.120 0.060",
            emp[0], emp[1], emp[2], emp[3], emp[4]
        );
        let worst = per_rep
            .iter()
            .map(|h| {
                h.iter()
                    .zip([0.12, 0.33, 0.37, 0.12, 0.06])
                    .map(|(e, t)| (e - t).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        let fails = per_rep
            .iter()
            .filter(|h| {
                h.iter()
                    .zip([0.12, 0.33, 0.37, 0.12, 0.06])
                    .any(|(e, t)| (e - t).abs() > 0.05)
            })
            .count();
        println!("worst per-rep deviation {worst:.3}, reps outside +-5pp: {fails}/100");
    }

    println!("const COS_KNOTS: [f64; 89] = [");
    for chunk in knots.chunks(6) {
        let line: Vec<String> = chunk.iter().map(|x| format!("{x:.6}")).collect();
        println!("    {},", line.join(", "));
    }
    println!("];");
    println!("const AFF_KNOTS: [f64; 89] = [");
    for chunk in aff.chunks(6) {
        let line: Vec<String> = chunk.iter().map(|x| format!("{x:.6}")).collect();
        println!("    {},", line.join(", "));
    }
    println!("];");

    const XB: usize = 40;
    const AB: usize = 100;
    let mut t_doc = vec![[0.0f64; 5]; XB];
    let mut t_rank = vec![[0.0f64; 5]; XB * K];
    let mut t_full = vec![[0.0f64; 5]; AB];
    for _ in 0..150 {
        let rep = simulate_rep(&mut rng, &knots, &aff, &prof, c_v);
        for &(x, rank, a, b) in &rep.samples {
            let xb = ((x * XB as f64) as usize).min(XB - 1);
            let ab = ((a * AB as f64) as usize).min(AB - 1);
            t_doc[xb][b] += 1.0;
            t_rank[xb * K + rank][b] += 1.0;
            t_full[ab][b] += 1.0;
        }
    }
    let norm = |t: &mut Vec<[f64; 5]>| {
        for row in t.iter_mut() {
            let s: f64 = row.iter().sum();
            if s > 0.0 {
                for v in row.iter_mut() {
                    *v /= s;
                }
            } else {
                *row = [0.2; 5];
            }
        }
    };
    norm(&mut t_doc);
    norm(&mut t_rank);
    norm(&mut t_full);

    let mut probs_doc = Vec::new();
    let mut probs_rank = Vec::new();
    let mut probs_full = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..5 {
        let rep = simulate_rep(&mut rng, &knots, &aff, &prof, c_v);
        for &(x, rank, a, b) in &rep.samples {
            let xb = ((x * XB as f64) as usize).min(XB - 1);
            let ab = ((a * AB as f64) as usize).min(AB - 1);
            probs_doc.push(t_doc[xb].to_vec());
            probs_rank.push(t_rank[xb * K + rank].to_vec());
            probs_full.push(t_full[ab].to_vec());
            labels.push(b as u8);
        }
    }
    println!(
        "oracle macro pr_auc: doctor-only {:.4}  doctor+rank {:.4}  full-affinity {:.4}",
        macro_pr_auc(&probs_doc, &labels, 5).unwrap(),
        macro_pr_auc(&probs_rank, &labels, 5).unwrap(),
        macro_pr_auc(&probs_full, &labels, 5).unwrap()
    );
    for (name, probs) in [
        ("doctor-only", &probs_doc),
        ("doctor+rank", &probs_rank),
        ("full-affinity", &probs_full),
    ] {
        let per: Vec<String> = (0..5)
            .map(|c| {
                let scores: Vec<f64> = probs.iter().map(|p| p[c]).collect();
                let pos: Vec<bool> = labels.iter().map(|&l| l as usize == c).collect();
                format!("{:.3}", pr_auc(&scores, &pos).unwrap())
            })
            .collect();
        println!("  {name} per-class: {}", per.join(" "));
    }
}

//! Synthetic corpus generator with a planted doctor-trial affinity signal.
//!
//! Each doctor blends a uniform topic base with one specialty topic; the
//! blend weight (focus) varies per doctor and is mirrored in the
//! practice-years static feature. Trial topic vectors are random
//! permutations of one fixed geometric profile, so a doctor-trial cosine
//! depends only on the doctor's focus and on the rank the trial assigns
//! the doctor's specialty. Affinity is that cosine pushed through a fixed
//! monotone piecewise-linear rescale to [0,1] calibrated offline: cosine
//! knots are quantiles of the induced cosine distribution, and affinity
//! knots concentrate mass in five narrow clusters placed so the full label
//! pipeline (noise, count rounding, per-trial min-max, binning) reproduces
//! the target bin histogram.

use std::collections::BTreeMap;

use rand::distributions::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Gamma, Normal, Poisson};

use crate::data::{
    labels_from_raw, CategorySpec, CodeVocabulary, Corpus, DoctorRecord, EnrollmentCounts,
    Patient, Sample, Trial, Visit,
};
use crate::error::{D2vError, Result};

const COS_KNOTS: [f64; 89] = [
    0.000000, 0.058579, 0.068252, 0.076438, 0.085132, 0.092985,
    0.099627, 0.106480, 0.113621, 0.121188, 0.129016, 0.137177,
    0.144878, 0.151024, 0.157427, 0.164037, 0.170911, 0.177991,
    0.185324, 0.192928, 0.200830, 0.208958, 0.217493, 0.226249,
    0.235225, 0.244556, 0.252351, 0.258939, 0.265765, 0.272765,
    0.279998, 0.287430, 0.295049, 0.302918, 0.310986, 0.319292,
    0.327920, 0.336719, 0.345682, 0.354984, 0.364431, 0.374025,
    0.383929, 0.393993, 0.404355, 0.414668, 0.425236, 0.435971,
    0.446743, 0.457617, 0.465164, 0.471797, 0.478526, 0.485356,
    0.492300, 0.499317, 0.506473, 0.513566, 0.520727, 0.527958,
    0.535125, 0.542234, 0.549243, 0.556233, 0.563074, 0.569777,
    0.576308, 0.582608, 0.588575, 0.594250, 0.599547, 0.604369,
    0.608458, 0.615478, 0.629199, 0.640576, 0.648659, 0.652527,
    0.738747, 0.828627, 0.883313, 0.890819, 0.898229, 0.905260,
    0.911692, 0.917171, 0.921370, 0.924017, 1.000000,
];

const AFF_KNOTS: [f64; 89] = [
    0.000000, 0.002841, 0.005682, 0.008523, 0.011364, 0.014205,
    0.017045, 0.019886, 0.022727, 0.025568, 0.028409, 0.285455,
    0.286488, 0.287521, 0.288554, 0.289587, 0.290620, 0.291653,
    0.292686, 0.293719, 0.294752, 0.295785, 0.296818, 0.297851,
    0.298884, 0.299917, 0.300950, 0.301983, 0.303017, 0.304050,
    0.305083, 0.306116, 0.307149, 0.308182, 0.309215, 0.310248,
    0.311281, 0.312314, 0.313347, 0.314380, 0.460369, 0.461290,
    0.462211, 0.463133, 0.464054, 0.464975, 0.465897, 0.466818,
    0.467740, 0.468661, 0.469582, 0.470504, 0.471425, 0.472346,
    0.473268, 0.474189, 0.475111, 0.476032, 0.476953, 0.477875,
    0.478796, 0.479717, 0.480639, 0.481560, 0.482482, 0.483403,
    0.484324, 0.485246, 0.486167, 0.487088, 0.488010, 0.488931,
    0.489853, 0.697386, 0.700227, 0.703068, 0.705909, 0.708750,
    0.711591, 0.714432, 0.717273, 0.720114, 0.722955, 0.962121,
    0.969697, 0.977273, 0.984848, 0.992424, 1.000000,
];

/// Decay ratio of the fixed trial topic profile the curve was fitted for.
const TRIAL_PROFILE_DECAY: f64 = 0.5;
/// Largest specialty blend weight a doctor can have; the rescale knots were
/// fitted for focus drawn uniformly from [0, FOCUS_MAX].
const FOCUS_MAX: f64 = 0.85;
/// Enrollment window used for generated counts; rates quantize to 1/1000.
const WINDOW: f64 = 1000.0;

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub n_doctors: usize,
    pub n_trials: usize,
    pub n_patients_per_doctor: (usize, usize),
    pub n_visits_per_patient: (usize, usize),
    /// (|diagnosis|, |procedure|, |medication|)
    pub vocab_sizes: (usize, usize, usize),
    pub n_topics: usize,
    pub noise_std: f64,
    pub seed: u64,
    pub target_bin_distribution: [f64; 5],
    pub doctors_per_trial: usize,
    /// Dirichlet concentration of per-patient topic weights around the
    /// doctor's mixture; smaller values give each doctor a more varied
    /// patient panel while preserving the doctor-level code marginals.
    pub patient_concentration: f64,
    pub n_countries: usize,
    pub mean_dx_per_visit: f64,
    pub mean_px_per_visit: f64,
    pub mean_rx_per_visit: f64,
    pub max_dx_per_visit: usize,
    pub max_px_per_visit: usize,
    pub max_retries: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_doctors: 200,
            n_trials: 50,
            n_patients_per_doctor: (4, 12),
            n_visits_per_patient: (2, 8),
            vocab_sizes: (60, 30, 80),
            n_topics: 8,
            noise_std: 0.05,
            seed: 7,
            target_bin_distribution: [0.12, 0.33, 0.37, 0.12, 0.06],
            doctors_per_trial: 40,
            patient_concentration: 1.0,
            n_countries: 2,
            mean_dx_per_visit: 4.23,
            mean_px_per_visit: 1.23,
            mean_rx_per_visit: 9.36,
            max_dx_per_visit: 56,
            max_px_per_visit: 18,
            max_retries: 25,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.n_doctors,
            self.n_trials,
            self.n_patients_per_doctor.0,
            self.n_visits_per_patient.0,
            self.vocab_sizes.0,
            self.vocab_sizes.1,
            self.vocab_sizes.2,
            self.n_topics,
            self.doctors_per_trial,
            self.n_countries,
            self.max_retries,
        ];
        if positive.iter().any(|&x| x == 0) {
            return Err(D2vError::Config("all counts must be positive".into()));
        }
        for (lo, hi, what) in [
            (self.n_patients_per_doctor, "n_patients_per_doctor"),
            (self.n_visits_per_patient, "n_visits_per_patient"),
        ]
        .map(|(r, w)| (r.0, r.1, w))
        {
            if lo > hi {
                return Err(D2vError::Config(format!("{what} range inverted")));
            }
        }
        if self.doctors_per_trial > self.n_doctors {
            return Err(D2vError::Config(
                "doctors_per_trial exceeds n_doctors".into(),
            ));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(D2vError::Config("noise_std must be finite and >= 0".into()));
        }
        if !(self.patient_concentration > 0.0 && self.patient_concentration.is_finite()) {
            return Err(D2vError::Config(
                "patient_concentration must be finite and positive".into(),
            ));
        }
        let sum: f64 = self.target_bin_distribution.iter().sum();
        if self.target_bin_distribution.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(D2vError::Config(
                "target_bin_distribution must be nonnegative and sum to 1 within 1e-9".into(),
            ));
        }
        Ok(())
    }
}

/// Planted ground truth kept alongside a generated corpus; the tag binds
/// entities to the run that produced them.
#[derive(Debug, Clone)]
pub struct TopicModel {
    tag: u64,
    pub n_topics: usize,
    pub doctor_mixtures: BTreeMap<String, Vec<f64>>,
    pub trial_vectors: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct GeneratedCorpus {
    pub corpus: Corpus,
    pub topic_model: TopicModel,
    /// How many generation attempts the calibration loop used.
    pub attempts: usize,
}

impl GeneratedCorpus {
    /// Ground-truth affinity oracle for a (doctor, trial) pair of this corpus.
    pub fn planted_affinity(&self, doctor_id: &str, trial_id: &str) -> Result<f64> {
        let tm = &self.topic_model;
        let mix = tm
            .doctor_mixtures
            .get(doctor_id)
            .ok_or_else(|| D2vError::UnknownId {
                kind: "doctor",
                id: doctor_id.to_string(),
            })?;
        let tv = tm
            .trial_vectors
            .get(trial_id)
            .ok_or_else(|| D2vError::UnknownId {
                kind: "trial",
                id: trial_id.to_string(),
            })?;
        Ok(affinity_from_cosine(cosine(mix, tv)))
    }

    pub fn corpus_tag(&self) -> u64 {
        self.topic_model.tag
    }

    /// Errors when the two generated corpora are not the same run.
    pub fn same_corpus(&self, other: &GeneratedCorpus) -> Result<()> {
        if self.topic_model.tag != other.topic_model.tag {
            return Err(D2vError::CorpusMismatch {
                a: self.topic_model.tag,
                b: other.topic_model.tag,
            });
        }
        Ok(())
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(0.0, 1.0)
    }
}

/// The fixed monotone rescale from cosine to planted affinity.
pub fn affinity_from_cosine(cos: f64) -> f64 {
    let c = cos.clamp(0.0, 1.0);
    match COS_KNOTS.partition_point(|&k| k <= c) {
        0 => AFF_KNOTS[0],
        i if i >= COS_KNOTS.len() => AFF_KNOTS[AFF_KNOTS.len() - 1],
        i => {
            let (x0, x1) = (COS_KNOTS[i - 1], COS_KNOTS[i]);
            let (y0, y1) = (AFF_KNOTS[i - 1], AFF_KNOTS[i]);
            y0 + (y1 - y0) * (c - x0) / (x1 - x0)
        }
    }
}

pub(crate) fn mix_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer over the pair keeps derived streams independent
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Dirichlet draw with per-component concentrations; the floor keeps the
/// sampler stable when a mixture component is vanishingly small.
fn dirichlet_weighted(rng: &mut ChaCha8Rng, alpha: &[f64]) -> Vec<f64> {
    if alpha.len() == 1 {
        return vec![1.0];
    }
    let mut v: Vec<f64> = alpha
        .iter()
        .map(|&a| {
            Gamma::new(a.max(1e-3), 1.0)
                .expect("alpha > 0")
                .sample(rng)
                .max(1e-300)
        })
        .collect();
    let sum: f64 = v.iter().sum();
    for x in &mut v {
        *x /= sum;
    }
    v
}

fn trial_profile(n_topics: usize) -> Vec<f64> {
    let mut p: Vec<f64> = (0..n_topics)
        .map(|i| TRIAL_PROFILE_DECAY.powi(i as i32))
        .collect();
    let sum: f64 = p.iter().sum();
    for x in &mut p {
        *x /= sum;
    }
    p
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Distinct weighted draws: a topic is chosen from the mixture, then a code
/// from that topic's slice of the vocab (round-robin: code c belongs to
/// topic c mod n_topics) or, with small probability, anywhere, until
/// `want` distinct codes are collected.
fn draw_codes(
    rng: &mut ChaCha8Rng,
    mixture: &[f64],
    vocab_len: usize,
    want: usize,
) -> Vec<usize> {
    const BACKGROUND: f64 = 0.2;
    let n_topics = mixture.len();
    let want = want.min(vocab_len);
    let mut seen = vec![false; vocab_len];
    let mut out = Vec::with_capacity(want);
    let mut guard = 0usize;
    while out.len() < want && guard < 60 * want + 60 {
        guard += 1;
        let topic = sample_categorical(rng, mixture);
        let owned = if topic < vocab_len {
            // number of codes c in 0..vocab_len with c % n_topics == topic
            (vocab_len - topic).div_ceil(n_topics)
        } else {
            0
        };
        let code = if owned == 0 || rng.gen::<f64>() < BACKGROUND {
            rng.gen_range(0..vocab_len)
        } else {
            topic + rng.gen_range(0..owned) * n_topics
        };
        if !seen[code] {
            seen[code] = true;
            out.push(code);
        }
    }
    // fill deterministically if rejection stalled on a tiny vocab
    for code in 0..vocab_len {
        if out.len() >= want {
            break;
        }
        if !seen[code] {
            seen[code] = true;
            out.push(code);
        }
    }
    out.sort_unstable();
    out
}

fn sample_categorical(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let mut u: f64 = rng.gen();
    for (i, &p) in probs.iter().enumerate() {
        u -= p;
        if u <= 0.0 {
            return i;
        }
    }
    probs.len() - 1
}

fn poisson_count(rng: &mut ChaCha8Rng, mean: f64, cap: usize) -> usize {
    let n = Poisson::new(mean.max(1e-12)).expect("mean > 0").sample(rng) as usize;
    n.min(cap)
}

fn keyword_tokens(vector: &[f64], phase: usize, area: usize) -> Vec<String> {
    let mut toks: Vec<String> = [
        "inclusion", "criteria", "patients", "aged", "with", "confirmed",
        "diagnosis", "exclusion", "prior", "therapy",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    toks.push(format!("phase{}", phase + 1));
    toks.push(format!("area{area}"));
    let mut order: Vec<usize> = (0..vector.len()).collect();
    order.sort_by(|&a, &b| vector[b].partial_cmp(&vector[a]).unwrap().then(a.cmp(&b)));
    for &t in &order {
        let copies = (vector[t] * 20.0).round() as usize;
        for j in 0..copies {
            toks.push(format!("topic{}kw{}", t, j % 6));
        }
    }
    toks
}

pub fn generate_corpus(config: &GenConfig) -> Result<GeneratedCorpus> {
    config.validate()?;
    let mut achieved = [0.0f64; 5];
    for attempt in 0..config.max_retries {
        let gen = generate_once(config, attempt as u64)?;
        let hist = gen.corpus.bin_histogram();
        let total: usize = hist.iter().sum();
        let emp: Vec<f64> = hist.iter().map(|&h| h as f64 / total as f64).collect();
        let ok = emp
            .iter()
            .zip(&config.target_bin_distribution)
            .all(|(e, t)| (e - t).abs() <= 0.05);
        if ok {
            return Ok(GeneratedCorpus {
                attempts: attempt + 1,
                ..gen
            });
        }
        achieved.copy_from_slice(&emp);
    }
    Err(D2vError::Calibration {
        attempts: config.max_retries,
        achieved,
        target: config.target_bin_distribution,
    })
}

fn generate_once(config: &GenConfig, attempt: u64) -> Result<GeneratedCorpus> {
    let base = mix_seed(config.seed, attempt);
    let (nd, np, nm) = config.vocab_sizes;
    let vocab = CodeVocabulary {
        diagnosis: (0..nd).map(|i| format!("D{i:03}")).collect(),
        procedure: (0..np).map(|i| format!("P{i:03}")).collect(),
        medication: (0..nm).map(|i| format!("M{i:03}")).collect(),
    };
    let categories = vec![
        CategorySpec { name: "phase".into(), cardinality: 4 },
        CategorySpec { name: "area".into(), cardinality: config.n_topics },
        CategorySpec { name: "country".into(), cardinality: config.n_countries },
        CategorySpec { name: "study_type".into(), cardinality: 3 },
    ];
    // static layout: practice years / 50, one-hot specialty, one-hot education
    let static_dim = 1 + config.n_topics + 3;

    let mut doctors = Vec::with_capacity(config.n_doctors);
    let mut doctor_mixtures = BTreeMap::new();
    for i in 0..config.n_doctors {
        let doctor_id = format!("d{i:04}");
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(base, 0x0d0c_0000 + i as u64));
        let specialty = rng.gen_range(0..config.n_topics);
        let focus = FOCUS_MAX * rng.gen::<f64>();
        // uniform base plus one specialty spike; cosine against a trial then
        // depends only on focus and the trial's rank for that specialty
        let mut mixture = vec![(1.0 - focus) / config.n_topics as f64; config.n_topics];
        mixture[specialty] += focus;
        let n_patients =
            rng.gen_range(config.n_patients_per_doctor.0..=config.n_patients_per_doctor.1);
        let mut patients = Vec::with_capacity(n_patients);
        for _ in 0..n_patients {
            // each patient leans toward a subset of the doctor's topics;
            // the expectation over patients recovers the doctor mixture
            let alpha: Vec<f64> = mixture
                .iter()
                .map(|&m| config.patient_concentration * m)
                .collect();
            let theta = dirichlet_weighted(&mut rng, &alpha);
            let n_visits =
                rng.gen_range(config.n_visits_per_patient.0..=config.n_visits_per_patient.1);
            let mut visits = Vec::with_capacity(n_visits);
            for t in 0..n_visits {
                let dx_n = poisson_count(&mut rng, config.mean_dx_per_visit, config.max_dx_per_visit);
                let px_n = poisson_count(&mut rng, config.mean_px_per_visit, config.max_px_per_visit);
                let rx_n = poisson_count(&mut rng, config.mean_rx_per_visit, nm);
                let mut visit = Visit {
                    dx: draw_codes(&mut rng, &theta, nd, dx_n),
                    px: draw_codes(&mut rng, &theta, np, px_n),
                    rx: draw_codes(&mut rng, &theta, nm, rx_n),
                    time_index: t as u32,
                };
                if visit.is_empty() {
                    visit.dx = draw_codes(&mut rng, &theta, nd, 1);
                }
                visits.push(visit);
            }
            patients.push(Patient { visits });
        }
        // practice years track focus so static features carry the planted
        // doctor-level breadth effect; education stays uninformative
        let years = (1.0 + (39.0 * focus / FOCUS_MAX).round()) / 50.0;
        let education = rng.gen_range(0..3usize);
        let mut static_features = vec![0.0; static_dim];
        static_features[0] = years;
        static_features[1 + specialty] = 1.0;
        static_features[1 + config.n_topics + education] = 1.0;
        doctors.push(DoctorRecord {
            doctor_id: doctor_id.clone(),
            patients,
            static_features,
        });
        doctor_mixtures.insert(doctor_id, mixture);
    }

    let profile = trial_profile(config.n_topics);
    let mut trials = Vec::with_capacity(config.n_trials);
    let mut trial_vectors = BTreeMap::new();
    let mut samples = Vec::new();
    for j in 0..config.n_trials {
        let trial_id = format!("t{j:03}");
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(base, 0x0731_0000 + j as u64));
        let mut perm: Vec<usize> = (0..config.n_topics).collect();
        for k in (1..perm.len()).rev() {
            perm.swap(k, rng.gen_range(0..=k));
        }
        let vector: Vec<f64> = {
            let mut v = vec![0.0; config.n_topics];
            for (rank, &topic) in perm.iter().enumerate() {
                v[topic] = profile[rank];
            }
            v
        };
        let phase = rng.gen_range(0..4usize);
        let area = argmax(&vector);
        let country = rng.gen_range(0..config.n_countries);
        let study_type = rng.gen_range(0..3usize);

        let mut pool: Vec<usize> = (0..config.n_doctors).collect();
        for k in 0..config.doctors_per_trial {
            let pick = rng.gen_range(k..pool.len());
            pool.swap(k, pick);
        }
        let chosen = &pool[..config.doctors_per_trial];

        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let mut raw_enrollments = BTreeMap::new();
        for &di in chosen {
            let doctor_id = &doctors[di].doctor_id;
            let aff = affinity_from_cosine(cosine(&doctor_mixtures[doctor_id], &vector));
            let noise = if config.noise_std > 0.0 {
                config.noise_std * normal.sample(&mut rng)
            } else {
                0.0
            };
            let raw = (aff + noise).clamp(0.0, 1.0);
            let discontinued = poisson_count(&mut rng, 2.0, 50) as u32;
            let randomized = (raw * WINDOW).round() as u32 + discontinued;
            raw_enrollments.insert(
                doctor_id.clone(),
                EnrollmentCounts {
                    randomized,
                    discontinued,
                    window: WINDOW,
                },
            );
        }

        let per_trial: Vec<(&String, f64)> = raw_enrollments
            .iter()
            .map(|(doc, e)| {
                let rate = f64::from(e.randomized - e.discontinued) / e.window;
                (doc, rate)
            })
            .collect();
        let raws: Vec<f64> = per_trial.iter().map(|(_, r)| *r).collect();
        let labels = labels_from_raw(&raws)?;
        for ((doc, _), label) in per_trial.iter().zip(labels) {
            samples.push(Sample {
                doctor_id: (*doc).clone(),
                trial_id: trial_id.clone(),
                label,
            });
        }

        trials.push(Trial {
            trial_id: trial_id.clone(),
            categorical: vec![phase, area, country, study_type],
            text_tokens: keyword_tokens(&vector, phase, area),
            raw_enrollments,
        });
        trial_vectors.insert(trial_id, vector);
    }

    let corpus = Corpus {
        seed: config.seed,
        vocab,
        categories,
        static_dim,
        doctors,
        trials,
        samples,
    };
    Ok(GeneratedCorpus {
        corpus,
        topic_model: TopicModel {
            tag: mix_seed(base, 0x7a67),
            n_topics: config.n_topics,
            doctor_mixtures,
            trial_vectors,
        },
        attempts: 0,
    })
}

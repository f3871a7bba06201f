//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use nak::dataset::{chronological_split, Dataset, PredictionInstance, Prior, Split, SplitWindows};
use nak::ids::{CourseId, StudentId};
use nak::models::{GradeModel, Model, ModelKind};
use nak::synth::{generate, SynthConfig, SynthData};
use nak::training::TrainConfig;
use nak::GradeScale;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const ALL_KINDS: [ModelKind; 6] = [
    ModelKind::Mf,
    ModelKind::Csr,
    ModelKind::KrmSum,
    ModelKind::KrmAvg,
    ModelKind::NakSoft,
    ModelKind::NakSparse,
];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Exact Euclidean projection onto the simplex by trying every support set.
/// Only sensible for short vectors.
pub fn projection_oracle(z: &[f64]) -> Vec<f64> {
    let k = z.len();
    assert!((1..=12).contains(&k));
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << k) {
        let members: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
        let tau = (members.iter().map(|&i| z[i]).sum::<f64>() - 1.0) / members.len() as f64;
        if members.iter().any(|&i| z[i] - tau < 0.0) {
            continue;
        }
        let p: Vec<f64> = (0..k)
            .map(|i| if mask & (1 << i) != 0 { z[i] - tau } else { 0.0 })
            .collect();
        let dist: f64 = p.iter().zip(z).map(|(a, b)| (a - b).powi(2)).sum();
        if best.as_ref().is_none_or(|(d, _)| dist < *d) {
            best = Some((dist, p));
        }
    }
    best.expect("some support is always feasible").1
}

/// Projection onto the simplex for `K <= 3` by grid search over the simplex,
/// zooming in around the best point until the cell is tiny.
pub fn grid_oracle(z: &[f64]) -> Vec<f64> {
    let k = z.len();
    assert!((1..=3).contains(&k));
    if k == 1 {
        return vec![1.0];
    }
    let dist = |p: &[f64]| p.iter().zip(z).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    // Free coordinates are all but the last, which is 1 minus their sum.
    let mut center = vec![1.0 / k as f64; k - 1];
    let mut radius = 1.0;
    let steps = 40;
    while radius > 1e-9 {
        let mut best = (f64::INFINITY, center.clone());
        let axis = |c: f64, s: usize| c - radius + 2.0 * radius * s as f64 / steps as f64;
        let mut visit = |free: Vec<f64>| {
            if free.iter().any(|&v| v < 0.0) {
                return;
            }
            let last = 1.0 - free.iter().sum::<f64>();
            if last < 0.0 {
                return;
            }
            let mut p = free.clone();
            p.push(last);
            let d = dist(&p);
            if d < best.0 {
                best = (d, free);
            }
        };
        for a in 0..=steps {
            let x = axis(center[0], a).clamp(0.0, 1.0);
            if k == 2 {
                visit(vec![x]);
            } else {
                for b in 0..=steps {
                    visit(vec![x, axis(center[1], b).clamp(0.0, 1.0)]);
                }
            }
        }
        center = best.1;
        radius *= 0.25;
    }
    let last = 1.0 - center.iter().sum::<f64>();
    center.push(last.max(0.0));
    center
}

pub fn random_vector(rng: &mut ChaCha8Rng, max_len: usize, bound: f64) -> Vec<f64> {
    let k = rng.random_range(1..=max_len);
    (0..k).map(|_| rng.random_range(-bound..=bound)).collect()
}

/// A random instance with 1 to `max_priors` priors over distinct courses.
pub fn random_instance(
    rng: &mut ChaCha8Rng,
    n_students: usize,
    n_courses: usize,
    max_priors: usize,
) -> PredictionInstance {
    let target = rng.random_range(0..n_courses) as u32;
    let n_priors = rng.random_range(1..=max_priors.min(n_courses - 1));
    let mut pool: Vec<u32> = (0..n_courses as u32).filter(|&c| c != target).collect();
    let mut priors = Vec::with_capacity(n_priors);
    for _ in 0..n_priors {
        let c = pool.swap_remove(rng.random_range(0..pool.len()));
        let raw = rng.random_range(0.0..=4.0);
        priors.push(Prior {
            course: CourseId(c),
            relative_grade: rng.random_range(-1.5..=1.5),
            raw_grade: raw,
            term_offset: rng.random_range(0..4),
        });
    }
    let relative = rng.random_range(-1.5..=1.5);
    let prior_mean = rng.random_range(1.0..=3.5);
    PredictionInstance {
        student: StudentId(rng.random_range(0..n_students) as u32),
        target_course: CourseId(target),
        target_term: 5,
        calendar_term: "2015FA".parse().unwrap(),
        target_relative_grade: relative,
        target_raw_grade: relative + prior_mean,
        prior_mean,
        priors,
    }
}

pub fn random_instances(seed: u64, n: usize, n_students: usize, n_courses: usize) -> Vec<PredictionInstance> {
    let mut r = rng(seed);
    (0..n).map(|_| random_instance(&mut r, n_students, n_courses, 8)).collect()
}

/// A model of `kind` whose parameters are all moved well away from zero, so
/// every term of the prediction matters.
pub fn random_model(kind: ModelKind, n_students: usize, n_courses: usize, train: &[PredictionInstance], seed: u64) -> Model {
    let config = TrainConfig {
        model: kind,
        d: 4,
        l: 3,
        lambda: 0.3,
        gamma: 0.3,
        ..TrainConfig::default()
    };
    let mut model = Model::init(&config.architecture(), n_students, n_courses, train, seed).unwrap();
    if let Model::Mf(p) = &mut model {
        for s in 0..n_students {
            p.set_seen(StudentId(s as u32), true);
        }
    }
    let mut r = rng(seed ^ 0x5eed);
    for v in model.values_mut() {
        *v = r.random_range(-0.8..=0.8);
    }
    model
}

/// Half squared error of one instance.
pub fn half_sq_error(model: &Model, inst: &PredictionInstance) -> f64 {
    0.5 * (model.predict(inst) - inst.target_relative_grade).powi(2)
}

/// Central finite difference of `f` with respect to parameter `index`.
pub fn central_difference(model: &mut Model, index: usize, h: f64, f: impl Fn(&Model) -> f64) -> f64 {
    let orig = model.values()[index];
    model.values_mut()[index] = orig + h;
    let up = f(model);
    model.values_mut()[index] = orig - h;
    let down = f(model);
    model.values_mut()[index] = orig;
    (up - down) / (2.0 * h)
}

/// Relative error with the tolerance tier used by the gradient checks:
/// 1e-6 where the gradient exceeds 1e-3 in magnitude, 1e-4 elsewhere, with
/// magnitudes below 1e-4 compared on an absolute 1e-4 scale.
pub fn gradient_agrees(analytic: f64, numeric: f64) -> bool {
    let mag = analytic.abs().max(numeric.abs());
    let rel = (analytic - numeric).abs() / mag.max(1e-4);
    let tol = if mag > 1e-3 { 1e-6 } else { 1e-4 };
    rel <= tol
}

/// Distance from the nearest point where a NAK forward pass changes branch:
/// a ReLU unit at zero or a sparsegen logit at the threshold.
pub fn nak_margin(model: &Model, inst: &PredictionInstance) -> f64 {
    let Model::Nak(p) = model else { return f64::INFINITY };
    let fwd = p.forward(inst);
    let mut margin = fwd.hidden.iter().fold(f64::INFINITY, |m, h| m.min(h.abs()));
    if let nak::activations::Activation::Sparsegen(g) = p.activation {
        let scaled: Vec<f64> = fwd.logits.iter().map(|z| z * g.scale()).collect();
        let tau = nak::activations::sparsemax_threshold(&scaled);
        for z in &scaled {
            margin = margin.min((z - tau).abs());
        }
    }
    margin
}

/// The synthetic windows used throughout: train through 2015 fall, validate
/// on 2016 spring, test on 2016 fall to 2017 spring.
pub fn synth_windows() -> SplitWindows {
    SplitWindows::new(
        "2015FA".parse().unwrap(),
        "2016SP..2016SP".parse().unwrap(),
        "2016FA..2017SP".parse().unwrap(),
    )
    .unwrap()
}

pub fn synth_split(config: &SynthConfig) -> (SynthData, Split) {
    let data = generate(config, &GradeScale::default()).unwrap();
    let ds = Dataset::from_records(data.records.clone()).unwrap();
    let split = chronological_split(&ds, synth_windows()).unwrap();
    (data, split)
}

/// A smaller synthetic population for tests that train many models.
pub fn small_synth(seed: u64) -> SynthConfig {
    SynthConfig {
        n_students: 400,
        seed,
        ..SynthConfig::default()
    }
}

/// Ten hand-checked predictions on the default scale:
/// `(predicted relative, actual relative, prior mean)` plus the expected
/// tick error of each.
pub const METRIC_FIXTURE: [(f64, f64, f64, usize); 10] = [
    (0.0, 0.333, 3.0, 1),   // B vs B+
    (0.05, 0.0, 3.0, 0),    // 3.05 snaps to B
    (1.2, 1.5, 2.5, 1),     // A- vs A
    (0.0, 0.0, 2.0, 0),     // C vs C
    (0.0, -1.0, 3.0, 3),    // B vs C
    (0.3, 1.0, 2.0, 2),     // C+ vs B
    (0.5, 0.5, 3.5, 0),     // A vs A
    (0.0, -1.0, 1.0, 2),    // D vs F
    (0.667, 0.667, 3.0, 0), // A- vs A-
    (1.0, 0.0, 2.667, 3),   // A- vs B-
];

/// Sum of squared residuals of [`METRIC_FIXTURE`], worked out by hand:
/// 0.333^2 + 0.05^2 + 0.3^2 + 1 + 0.7^2 + 1 + 1.
pub const METRIC_FIXTURE_SQ_SUM: f64 = 0.110889 + 0.0025 + 0.09 + 1.0 + 0.49 + 1.0 + 1.0;

/// Tick accuracies of [`METRIC_FIXTURE`]: 4, 6 and 8 of the ten predictions
/// are within 0, 1 and 2 ticks.
pub const METRIC_FIXTURE_PTA: (f64, f64, f64) = (40.0, 60.0, 80.0);

pub fn metric_fixture_pairs() -> Vec<nak::eval::PredictionPair> {
    METRIC_FIXTURE
        .iter()
        .map(|&(predicted, actual, prior_mean, _)| nak::eval::PredictionPair {
            predicted,
            actual,
            prior_mean,
        })
        .collect()
}

/// One student over three terms: two first-term courses, a second-term grade
/// equal to the prior average, and a third-term grade below it.
pub const CENTERING_FIXTURE: &str = "student_id,course_id,term,grade
s1,M1,2014FA,A
s1,P1,2014FA,C
s1,M2,2015SP,B
s1,P2,2015FA,C
";

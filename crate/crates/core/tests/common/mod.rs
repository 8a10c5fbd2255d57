//! Reference implementations and fixtures shared by the integration tests.
//! The oracles are written from the definitions, favoring obviousness over
//! speed, and share no code with the library beyond its data types.
#![allow(dead_code)]

use depthtok::{
    CameraRole, CompressedTokens, EngineConfig, Error, FrameRecord, GridDims, MergePair, Scenario, ScenarioSpec, Trace,
};
use rand::Rng;

pub const ORACLE_MAX_REGION: usize = 16;

fn oracle_cosine(a: &[f32], b: &[f32]) -> f64 {
    let mut ab = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        ab += *x as f64 * *y as f64;
    }
    let mut aa = 0.0f64;
    for x in a {
        aa += *x as f64 * *x as f64;
    }
    let mut bb = 0.0f64;
    for y in b {
        bb += *y as f64 * *y as f64;
    }
    if aa == 0.0 || bb == 0.0 {
        return 0.0;
    }
    let c = (ab / (aa * bb).sqrt()).clamp(-1.0, 1.0);
    if c == 0.0 {
        0.0
    } else {
        c
    }
}

/// Full-scan matching over a region of at most 16 patches.
pub fn matching_oracle(
    members: &[usize],
    grid: GridDims,
    rows: &dyn Fn(usize) -> Vec<f32>,
    region_id: usize,
) -> Result<Vec<MergePair>, Error> {
    if members.len() > ORACLE_MAX_REGION {
        return Err(Error::TooLarge(members.len()));
    }
    let mut sorted = members.to_vec();
    sorted.sort_unstable();
    let parity_even = |i: usize| (i / grid.cols + i % grid.cols).is_multiple_of(2);
    let evens: Vec<usize> = sorted.iter().copied().filter(|&i| parity_even(i)).collect();
    let odds: Vec<usize> = sorted.iter().copied().filter(|&i| !parity_even(i)).collect();
    let (sources, targets) = if evens.len() >= odds.len() {
        (odds, evens)
    } else {
        (evens, odds)
    };
    if sources.is_empty() || targets.is_empty() {
        return Ok(Vec::new());
    }

    let mut pairs = Vec::new();
    for &a in &sources {
        let ea = rows(a);
        let mut best: Option<(usize, f64)> = None;
        for &b in &targets {
            let s = oracle_cosine(&ea, &rows(b));
            let better = match best {
                None => true,
                Some((bb, bs)) => s > bs || (s == bs && b < bb),
            };
            if better {
                best = Some((b, s));
            }
        }
        let (dst, similarity) = best.unwrap();
        pairs.push(MergePair {
            src: a,
            dst,
            similarity,
            region_id,
        });
    }
    // Selection sort: highest similarity first, lowest source on ties.
    let mut ordered = Vec::with_capacity(pairs.len());
    while !pairs.is_empty() {
        let mut pick = 0;
        for i in 1..pairs.len() {
            let (p, q) = (&pairs[i], &pairs[pick]);
            if p.similarity > q.similarity || (p.similarity == q.similarity && p.src < q.src) {
                pick = i;
            }
        }
        ordered.push(pairs.remove(pick));
    }
    Ok(ordered)
}

/// Merge target for ratio `num / den` over `n` members with `a` sources,
/// in exact integer arithmetic.
pub fn target_oracle(num: usize, den: usize, n: usize, sources: usize) -> usize {
    (num * n / den).min(sources)
}

/// Largest q with `q * W <= min(elapsed, W) * m`, found by counting up.
pub fn merges_due_oracle(elapsed: usize, window: usize, m: usize) -> usize {
    let e = elapsed.min(window);
    let mut q = 0;
    while (q + 1) * window <= e * m {
        q += 1;
    }
    q
}

fn sse(group: &[f64]) -> f64 {
    if group.is_empty() {
        return 0.0;
    }
    let mean = group.iter().sum::<f64>() / group.len() as f64;
    group.iter().map(|v| (v - mean) * (v - mean)).sum()
}

/// Minimum within-cluster SSE over every split of the sorted values into
/// `min(k, n)` contiguous non-empty groups.
pub fn kmeans_bruteforce_sse(values: &[f64], k: usize) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let k = k.min(n).max(1);
    if n == 0 {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    // Each bitmask over the n-1 gaps with exactly k-1 bits set is a split.
    for mask in 0u32..(1 << (n - 1)) {
        if mask.count_ones() as usize != k - 1 {
            continue;
        }
        let mut total = 0.0;
        let mut start = 0;
        for gap in 0..n - 1 {
            if mask & (1 << gap) != 0 {
                total += sse(&sorted[start..=gap]);
                start = gap + 1;
            }
        }
        total += sse(&sorted[start..]);
        best = best.min(total);
    }
    best
}

pub fn sse_of_labels(values: &[f64], labels: &[usize], k: usize) -> f64 {
    (0..k)
        .map(|c| {
            let group: Vec<f64> = values
                .iter()
                .zip(labels)
                .filter(|(_, &l)| l == c)
                .map(|(&v, _)| v)
                .collect();
            sse(&group)
        })
        .sum()
}

pub fn trace(scenario: Scenario, frames: usize, seed: u64) -> Trace {
    depthtok::generate_scene(&ScenarioSpec::preset(scenario, frames), seed).unwrap()
}

pub fn trace_from(spec: &ScenarioSpec, seed: u64) -> Trace {
    depthtok::generate_scene(spec, seed).unwrap()
}

/// Adds `delta` meters to every pixel of the given primary patches on
/// frames `from..`.
pub fn inject_depth_jump(trace: &mut Trace, from: usize, patches: &[usize], delta: f32) {
    for frame in &mut trace.frames[from..] {
        let cam = frame.camera_mut(CameraRole::Primary).unwrap();
        let grid = cam.grid;
        let (ph, pw) = (cam.depth.height / grid.rows, cam.depth.width / grid.cols);
        let width = cam.depth.width;
        for &p in patches {
            let (r, c) = grid.coords(p);
            for y in r * ph..(r + 1) * ph {
                for x in c * pw..(c + 1) * pw {
                    cam.depth.data[y * width + x] += delta;
                }
            }
        }
    }
}

pub fn random_config(rng: &mut impl Rng) -> EngineConfig {
    let (a, b): (f64, f64) = (rng.random(), rng.random());
    EngineConfig {
        warmup_frames: rng.random_range(1..=6),
        clusters: rng.random_range(1..=5),
        merge_window: rng.random_range(1..=8),
        r_min: a.min(b),
        r_max: a.max(b),
        tau_edge: rng.random_range(0.01..0.2),
        epsilon: rng.random_range(0.002..0.05),
        gamma: rng.random_range(0.05..0.9),
        delta_reinit: rng.random_range(0.02..0.2),
        dynamics_window: rng.random_range(1..=6),
        seed: rng.random(),
        uniform_ratio: rng.random_bool(0.2),
        one_shot: rng.random_bool(0.2),
        no_protection: rng.random_bool(0.2),
        no_reinit: rng.random_bool(0.2),
        no_auxview: rng.random_bool(0.2),
        r_aux: rng.random(),
        ..EngineConfig::default()
    }
}

/// Largest relative deviation between the size-weighted token sum and the
/// patch embedding sum of `camera` in `frame`.
pub fn conservation_error(frame: &FrameRecord, role: CameraRole, tokens: &CompressedTokens) -> f64 {
    let emb = &frame.camera(role).unwrap().embeddings;
    let dim = emb.dim();
    let mut want = vec![0.0f64; dim];
    let mut scale = vec![0.0f64; dim];
    for i in 0..emb.rows() {
        for (j, &v) in emb.row(i).iter().enumerate() {
            want[j] += v as f64;
            scale[j] += (v as f64).abs();
        }
    }
    let mut got = vec![0.0f64; dim];
    for r in 0..tokens.retained() {
        let size = tokens.sizes[r] as f64;
        for (j, &v) in tokens.embeddings.row(r).iter().enumerate() {
            got[j] += size * v as f64;
        }
    }
    (0..dim)
        .map(|j| (want[j] - got[j]).abs() / scale[j].max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}

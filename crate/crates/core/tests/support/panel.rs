//! Random small panels and a brute-force enumerator for every agreement
//! quantity, written independently of the engine: plain nested vectors,
//! explicit loops, no shared helpers.

#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::HashMap;

use rand::Rng;
use rpad_core::agreement::{
    kappa_report, pairwise_table, CategoryModel, Metric, MetricConfig, ShortBagPolicy, Symmetrize,
    VarianceReport,
};
use rpad_core::corpus::{CaseChat, DiagnosisBag, EvaluationDataset, Rater, RaterKind};

pub const VOCAB: [&str; 6] = ["flu", "cold", "asthma", "copd", "gerd", "migraine"];

#[derive(Debug, Clone)]
pub struct RawPanel {
    pub n: usize,
    pub z: usize,
    /// `bags[r][c]`; raters `0..z` are experts, rater `z` the algorithm.
    pub bags: Vec<Vec<Vec<String>>>,
    pub bits: HashMap<(String, String), bool>,
}

impl RawPanel {
    pub fn m(&self, a: &str, b: &str) -> bool {
        self.bits[&(a.to_owned(), b.to_owned())]
    }
}

/// `full_bags` gives every bag 3 items; otherwise sizes are 1..=3.
pub fn random_panel<R: Rng>(rng: &mut R, full_bags: bool, symmetric: bool) -> RawPanel {
    let n = rng.random_range(1..=6);
    let z = rng.random_range(3..=4);
    let bags = (0..=z)
        .map(|_| {
            (0..n)
                .map(|_| {
                    let len = if full_bags { 3 } else { rng.random_range(1..=3) };
                    (0..len)
                        .map(|_| VOCAB[rng.random_range(0..VOCAB.len())].to_owned())
                        .collect()
                })
                .collect()
        })
        .collect();
    let mut bits = HashMap::new();
    for (i, a) in VOCAB.iter().enumerate() {
        for (j, b) in VOCAB.iter().enumerate() {
            if symmetric && j < i {
                let v = bits[&(b.to_string(), a.to_string())];
                bits.insert((a.to_string(), b.to_string()), v);
            } else {
                // denser on the diagonal so panels agree often enough
                let p = if i == j { 0.8 } else { 0.3 };
                bits.insert((a.to_string(), b.to_string()), rng.random_bool(p));
            }
        }
    }
    RawPanel { n, z, bags, bits }
}

pub fn to_dataset(p: &RawPanel) -> EvaluationDataset {
    let cases = (0..p.n)
        .map(|c| CaseChat {
            case_id: format!("case{c}"),
            transcript: None,
        })
        .collect();
    let mut raters: Vec<Rater> = (0..p.z)
        .map(|e| Rater {
            id: format!("e{e}"),
            kind: RaterKind::Expert,
        })
        .collect();
    raters.push(Rater {
        id: "algo".into(),
        kind: RaterKind::Algorithm,
    });
    let bags = p
        .bags
        .iter()
        .map(|per_case| {
            per_case
                .iter()
                .map(|items| DiagnosisBag::from_strs(items, 3).unwrap())
                .collect()
        })
        .collect();
    EvaluationDataset::from_parts(cases, raters, bags, 3).unwrap()
}

#[derive(Debug, Clone, Default)]
pub struct OracleValues {
    /// `[expert]`: algorithm as first argument.
    pub p_ae: Vec<f64>,
    pub r_ae: Vec<f64>,
    /// `[i][j]`, filled for i < j and mirrored.
    pub p_ee: Vec<Vec<f64>>,
    pub r_ee: Vec<Vec<f64>>,
    pub p_opt: Option<f64>,
    pub r_opt: Option<f64>,
    pub p_avg: Option<f64>,
    pub r_avg: Option<f64>,
    pub rpad: Option<f64>,
    pub rrad: Option<f64>,
    pub sigma_a_p: f64,
    pub sigma_a_r: f64,
    pub sigma_e_p: f64,
    pub sigma_e_r: f64,
    pub kappa_ae: Vec<f64>,
    pub kappa_ee: Vec<Vec<f64>>,
    pub sigma_a_k: f64,
    pub sigma_e_k: f64,
}

fn decide(p: &RawPanel, sym: Symmetrize, a: &str, b: &str) -> bool {
    match sym {
        Symmetrize::AsIs => p.m(a, b),
        Symmetrize::Or => p.m(a, b) | p.m(b, a),
        Symmetrize::And => p.m(a, b) & p.m(b, a),
    }
}

/// `Some((P, R))`, or `None` when a strict cutoff meets a short bag.
fn pair(p: &RawPanel, x: usize, y: usize, k: usize, sym: Symmetrize, strict: bool) -> Option<(f64, f64)> {
    let mut mu_total = 0usize;
    let mut chi_total = 0usize;
    for c in 0..p.n {
        let (bx, by) = (&p.bags[x][c], &p.bags[y][c]);
        if strict && (bx.len() < k || by.len() < k) {
            return None;
        }
        let mut mu = 0;
        for pi in 0..k.min(bx.len()) {
            for qi in 0..k.min(by.len()) {
                if decide(p, sym, &bx[pi], &by[qi]) {
                    mu += 1;
                }
            }
        }
        mu_total += mu;
        if mu > 0 {
            chi_total += 1;
        }
    }
    Some((mu_total as f64 / (p.n * k * k) as f64, chi_total as f64 / p.n as f64))
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    if den > 0.0 {
        Some(num / den)
    } else {
        None
    }
}

fn sigma_sample(v: &[f64]) -> f64 {
    let z = v.len() as f64;
    let m = v.iter().sum::<f64>() / z;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (z - 1.0)).sqrt()
}

fn sigma_expert(ee: &[Vec<f64>]) -> f64 {
    let z = ee.len();
    let mut acc = 0.0;
    for i in 0..z {
        let row: Vec<f64> = (0..z).filter(|j| *j != i).map(|j| ee[i][j]).collect();
        let m = row.iter().sum::<f64>() / row.len() as f64;
        acc += (row.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (z as f64 - 2.0)).sqrt();
    }
    acc / z as f64
}

fn kappa(xs: &[String], ys: &[String]) -> f64 {
    let n = xs.len() as f64;
    let po = xs.iter().zip(ys).filter(|(a, b)| a == b).count() as f64 / n;
    let mut pe = 0.0;
    for cat in VOCAB {
        let fx = xs.iter().filter(|s| *s == cat).count() as f64 / n;
        let fy = ys.iter().filter(|s| *s == cat).count() as f64 / n;
        pe += fx * fy;
    }
    let single = xs.iter().chain(ys).all(|s| *s == xs[0]);
    if single {
        return if po == 1.0 { 1.0 } else { 0.0 };
    }
    (po - pe) / (1.0 - pe)
}

/// `None` when a strict cutoff meets a short bag.
pub fn oracle(p: &RawPanel, k: usize, h: f64, sym: Symmetrize, strict: bool) -> Option<OracleValues> {
    let z = p.z;
    let algo = z;
    let mut o = OracleValues {
        p_ee: vec![vec![0.0; z]; z],
        r_ee: vec![vec![0.0; z]; z],
        kappa_ee: vec![vec![0.0; z]; z],
        ..OracleValues::default()
    };
    for e in 0..z {
        let (pp, rr) = pair(p, algo, e, k, sym, strict)?;
        o.p_ae.push(pp);
        o.r_ae.push(rr);
    }
    let mut p_flat = Vec::new();
    let mut r_flat = Vec::new();
    for i in 0..z {
        for j in i + 1..z {
            let (pp, rr) = pair(p, i, j, k, sym, strict)?;
            o.p_ee[i][j] = pp;
            o.p_ee[j][i] = pp;
            o.r_ee[i][j] = rr;
            o.r_ee[j][i] = rr;
            p_flat.push(pp);
            r_flat.push(rr);
        }
    }
    let mx = |v: &[f64]| v.iter().cloned().fold(f64::MIN, f64::max);
    let mn = |v: &[f64]| v.iter().cloned().fold(f64::MAX, f64::min);
    let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    o.p_opt = ratio(mx(&o.p_ae), mn(&p_flat));
    o.r_opt = ratio(mx(&o.r_ae), mn(&r_flat));
    o.p_avg = ratio(avg(&o.p_ae), avg(&p_flat));
    o.r_avg = ratio(avg(&o.r_ae), avg(&r_flat));
    o.rpad = ratio(
        (1.0 - h) * mx(&o.p_ae) + h * avg(&o.p_ae),
        (1.0 - h) * mn(&p_flat) + h * avg(&p_flat),
    );
    o.rrad = ratio(
        (1.0 - h) * mx(&o.r_ae) + h * avg(&o.r_ae),
        (1.0 - h) * mn(&r_flat) + h * avg(&r_flat),
    );
    o.sigma_a_p = sigma_sample(&o.p_ae);
    o.sigma_a_r = sigma_sample(&o.r_ae);
    o.sigma_e_p = sigma_expert(&o.p_ee);
    o.sigma_e_r = sigma_expert(&o.r_ee);

    let top = |r: usize| -> Vec<String> { p.bags[r].iter().map(|b| b[0].clone()).collect() };
    for e in 0..z {
        o.kappa_ae.push(kappa(&top(algo), &top(e)));
    }
    for i in 0..z {
        for j in i + 1..z {
            let v = kappa(&top(i), &top(j));
            o.kappa_ee[i][j] = v;
            o.kappa_ee[j][i] = v;
        }
    }
    o.sigma_a_k = sigma_sample(&o.kappa_ae);
    o.sigma_e_k = sigma_expert(&o.kappa_ee);
    Some(o)
}

/// Runs the engine on `p` and returns the largest absolute deviation from
/// the oracle, or a description of the first structural disagreement.
pub fn engine_vs_oracle(p: &RawPanel, k: usize, h: f64, sym: Symmetrize, strict: bool) -> Result<f64, String> {
    let ds = to_dataset(p);
    let m = |a: &str, b: &str| p.m(a, b);
    let cfg = MetricConfig {
        k,
        hardness: h,
        short_bag_policy: if strict { ShortBagPolicy::Strict } else { ShortBagPolicy::Penalize },
        symmetrize: sym,
    };
    let want = oracle(p, k, h, sym, strict);
    let table = pairwise_table(&ds, &m, &cfg);
    let (want, table) = match (want, table) {
        (None, Err(_)) => return Ok(0.0),
        (Some(w), Ok(t)) => (w, t),
        (w, t) => return Err(format!("short-bag disagreement: oracle {:?} engine {:?}", w.is_some(), t.err())),
    };
    let mut worst: f64 = 0.0;
    let mut cmp = |what: &str, a: f64, b: f64| -> Result<(), String> {
        let d = (a - b).abs();
        if d.is_nan() || d > 1e-12 {
            return Err(format!("{what}: engine {a} oracle {b}"));
        }
        worst = worst.max(d);
        Ok(())
    };
    for (e, (pe, re)) in table.ae_values(Metric::Precision).iter().zip(table.ae_values(Metric::Recall)).enumerate() {
        cmp("P_AE", *pe, want.p_ae[e])?;
        cmp("R_AE", re, want.r_ae[e])?;
    }
    let (pm, rm) = (table.ee_matrix(Metric::Precision), table.ee_matrix(Metric::Recall));
    for i in 0..p.z {
        for j in 0..p.z {
            if i != j {
                cmp("P_EE", pm[i][j], want.p_ee[i][j])?;
                cmp("R_EE", rm[i][j], want.r_ee[i][j])?;
            }
        }
    }
    let rel = [
        ("P_opt", table.relative(Metric::Precision, 0.0), want.p_opt),
        ("R_opt", table.relative(Metric::Recall, 0.0), want.r_opt),
        ("P_avg", table.relative(Metric::Precision, 1.0), want.p_avg),
        ("R_avg", table.relative(Metric::Recall, 1.0), want.r_avg),
        ("RPAD", table.relative(Metric::Precision, h), want.rpad),
        ("RRAD", table.relative(Metric::Recall, h), want.rrad),
    ];
    for (what, got, w) in rel {
        match (got, w) {
            (Ok(a), Some(b)) => cmp(what, a, b)?,
            (Err(_), None) => {}
            (g, w) => return Err(format!("{what}: engine {g:?} oracle {w:?}")),
        }
    }
    let kap = kappa_report(&ds, CategoryModel::Exact, &m, sym).map_err(|e| e.to_string())?;
    let var = VarianceReport::from_tables(&table, Some(&kap));
    cmp("sigma_A_P", var.sigma_algo_precision.unwrap(), want.sigma_a_p)?;
    cmp("sigma_A_R", var.sigma_algo_recall.unwrap(), want.sigma_a_r)?;
    cmp("sigma_E_P", var.sigma_expert_precision.unwrap(), want.sigma_e_p)?;
    cmp("sigma_E_R", var.sigma_expert_recall.unwrap(), want.sigma_e_r)?;
    for (e, v) in kap.ae_values().iter().enumerate() {
        cmp("kappa_AE", *v, want.kappa_ae[e])?;
    }
    let km = kap.ee_matrix();
    for i in 0..p.z {
        for j in 0..p.z {
            if i != j {
                cmp("kappa_EE", km[i][j], want.kappa_ee[i][j])?;
            }
        }
    }
    cmp("sigma_A_kappa", var.sigma_algo_kappa.unwrap(), want.sigma_a_k)?;
    cmp("sigma_E_kappa", var.sigma_expert_kappa.unwrap(), want.sigma_e_k)?;
    Ok(worst)
}

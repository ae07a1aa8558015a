//! `gtd-oracle`: compare pair selection and the topology loss against
//! an independent brute-force implementation on random instances.
//!
//! The oracle here is written from scratch (naive loops, its own
//! softmax/KL); a nonzero exit means the library path disagrees.

use disgcmae::distill::{gtd_loss, kernel_similarity, select_pairs, DistillConfig, PairSets};
use disgcmae::error::{Error, Result};
use disgcmae::graph::NodePartition;
use disgcmae::numerics::tensor::Tensor;
use disgcmae::rng::StreamRng;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

fn normalize(data: &[f64]) -> Vec<f64> {
    let lo = data.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return vec![0.0; data.len()];
    }
    data.iter().map(|&v| (v - lo) / (hi - lo)).collect()
}

fn oracle_pairs(a_h: &Tensor, a_l: &Tensor, partition: &NodePartition, theta: f64) -> PairSets {
    let m = partition.m();
    let n = partition.n();
    let nh = normalize(&a_h.data);
    let nl = normalize(&a_l.data);
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let (gi, gj) = (partition.v_l[i], partition.v_l[j]);
            let mut positive = nh[gi * m + gj] > theta;
            if !partition.is_h2h() && !positive {
                for &k in &partition.v_d {
                    if nh[k * m + gi] > theta && nh[k * m + gj] > theta {
                        positive = true;
                        break;
                    }
                }
            }
            if positive {
                positives.push((i, j));
            } else if nl[i * n + j] > theta {
                negatives.push((i, j));
            }
        }
    }
    PairSets {
        c_pos: positives.len(),
        c_neg: negatives.len(),
        positives,
        negatives,
    }
}

fn oracle_softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|&x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

fn oracle_kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&pi, &qi)| pi * (pi.max(1e-12).ln() - qi.max(1e-12).ln()))
        .sum()
}

fn oracle_gtd(s: &Tensor, t: &Tensor, pairs: &PairSets, cfg: &DistillConfig) -> f64 {
    if pairs.c_pos == 0 {
        return 0.0;
    }
    let scores = |emb: &Tensor, list: &[(usize, usize)]| -> Vec<f64> {
        list.iter()
            .map(|&(i, j)| kernel_similarity(emb.row(i), emb.row(j), &cfg.kernel))
            .collect()
    };
    let l_pos = oracle_kl(
        &oracle_softmax(&scores(s, &pairs.positives)),
        &oracle_softmax(&scores(t, &pairs.positives)),
    );
    let denom = if pairs.c_neg == 0 {
        cfg.epsilon
    } else {
        oracle_kl(
            &oracle_softmax(&scores(s, &pairs.negatives)),
            &oracle_softmax(&scores(t, &pairs.negatives)),
        ) / pairs.c_neg as f64
            + cfg.epsilon
    };
    (l_pos / pairs.c_pos as f64) / denom
}

fn random_adjacency(m: usize, rng: &mut impl Rng) -> Tensor {
    let mut a = vec![0.0; m * m];
    for i in 0..m {
        for j in (i + 1)..m {
            if rng.gen::<f64>() < 0.45 {
                let w = rng.gen::<f64>();
                a[i * m + j] = w;
                a[j * m + i] = w;
            }
        }
    }
    Tensor::matrix(m, m, a)
}

#[derive(serde::Serialize)]
struct Counterexample {
    seed: u64,
    m: usize,
    keep: Vec<usize>,
    theta: f64,
    a_h: Vec<f64>,
    a_l: Vec<f64>,
    expected_positives: Vec<(usize, usize)>,
    got_positives: Vec<(usize, usize)>,
    expected_negatives: Vec<(usize, usize)>,
    got_negatives: Vec<(usize, usize)>,
}

pub fn run(seeds: usize, max_nodes: usize) -> Result<()> {
    if seeds < 1 {
        return Err(Error::config("need at least one seed".to_string()));
    }
    if max_nodes > 14 || max_nodes < 2 {
        return Err(Error::config("max-nodes must lie in 2..=14".to_string()));
    }
    let root = StreamRng::new(0xfeed);
    let cfg = DistillConfig::default();
    let mut h2h = 0;
    let mut zero_neg = 0;
    for seed in 0..seeds as u64 {
        let mut rng = root.stream(&[seed]);
        let m = 2 + (rng.gen::<u64>() % (max_nodes as u64 - 1)) as usize;
        let n = if seed % 5 == 0 {
            m
        } else {
            1 + (rng.gen::<u64>() % m as u64) as usize
        };
        let mut ids: Vec<usize> = (0..m).collect();
        ids.shuffle(&mut rng);
        let keep: Vec<usize> = ids[..n].to_vec();
        let partition = NodePartition::new(m, &keep).expect("valid partition");
        if partition.is_h2h() {
            h2h += 1;
        }
        let a_h = random_adjacency(m, &mut rng);
        let a_l = random_adjacency(n, &mut rng);
        let theta = 0.3 * rng.gen::<f64>();

        let got = select_pairs(&a_h, &a_l, &partition, theta)?;
        let expect = oracle_pairs(&a_h, &a_l, &partition, theta);
        if got != expect {
            let ce = Counterexample {
                seed,
                m,
                keep,
                theta,
                a_h: a_h.data.clone(),
                a_l: a_l.data.clone(),
                expected_positives: expect.positives,
                got_positives: got.positives,
                expected_negatives: expect.negatives,
                got_negatives: got.negatives,
            };
            println!("{}", serde_json::to_string_pretty(&ce).expect("serializes"));
            return Err(Error::Internal(format!("pair selection mismatch at seed {}", seed)));
        }
        if got.c_neg == 0 {
            zero_neg += 1;
        }

        let d = 3;
        let s_emb = Tensor::matrix(n, d, (0..n * d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect());
        let t_emb = Tensor::matrix(n, d, (0..n * d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect());
        let got_loss = gtd_loss(&s_emb, &t_emb, &got, &cfg)?;
        let expect_loss = oracle_gtd(&s_emb, &t_emb, &expect, &cfg);
        if (got_loss - expect_loss).abs() > 1e-10 * expect_loss.abs().max(1.0) {
            println!(
                "{{\"seed\": {}, \"got_loss\": {}, \"expected_loss\": {}}}",
                seed, got_loss, expect_loss
            );
            return Err(Error::Internal(format!("topology loss mismatch at seed {}", seed)));
        }
    }
    println!(
        "verified {} instances (max {} nodes, {} equal-node-set, {} without negatives): all match",
        seeds, max_nodes, h2h, zero_neg
    );
    Ok(())
}

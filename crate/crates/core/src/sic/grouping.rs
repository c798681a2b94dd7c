//! Decoding-order grouping by sum-rate maximization at fixed power.
//!
//! With groups `G_1, …, G_T` and `K_t = G_t ∪ … ∪ G_T`, user `k ∈ G_t`
//! is credited with `R_{t,k} = logdet(I + Σ_{K_t} a a^H) - logdet(I + Σ_{K_t∖k} a a^H)`
//! (bits, summed over subcarriers, whitened channel). Groups are filled
//! greedily by descending rate, then single users move to the neighbouring
//! group while that strictly raises the sum rate.

use num_complex::Complex64;

use super::{columns_of, weighted_b, SicError};
use crate::channel::EffectiveChannel;
use crate::convex::linalg::{ln_det_hpd, CVector};
use crate::state_evolution::Grouping;
use crate::transceiver::PrecoderSet;

/// `Σ_j log2 det(I + Σ_{k ∈ set} a_k(j) a_k(j)^H)`.
fn log2det_sum(columns: &[Vec<CVector>], set: &[bool]) -> Result<f64, SicError> {
    let weights: Vec<f64> = set.iter().map(|&b| f64::from(u8::from(b))).collect();
    let mut acc = 0.0;
    for j in 0..columns[0].len() {
        acc += ln_det_hpd(&weighted_b(columns, &weights, j))? / std::f64::consts::LN_2;
    }
    Ok(acc)
}

fn user_rate(columns: &[Vec<CVector>], set: &[bool], user: usize) -> Result<f64, SicError> {
    let mut without = set.to_vec();
    without[user] = false;
    Ok(log2det_sum(columns, set)? - log2det_sum(columns, &without)?)
}

/// Rates `R_{t,k}` for every user in `remaining`.
fn rates_within(columns: &[Vec<CVector>], remaining: &[bool]) -> Result<Vec<f64>, SicError> {
    let total = log2det_sum(columns, remaining)?;
    (0..columns.len())
        .map(|k| {
            if !remaining[k] {
                return Ok(f64::NEG_INFINITY);
            }
            let mut without = remaining.to_vec();
            without[k] = false;
            Ok(total - log2det_sum(columns, &without)?)
        })
        .collect()
}

fn sum_rate_columns(columns: &[Vec<CVector>], groups: &[Vec<usize>]) -> Result<f64, SicError> {
    let k = columns.len();
    let mut total = 0.0;
    for t in 0..groups.len() {
        let mut set = vec![false; k];
        for g in &groups[t..] {
            for &u in g {
                set[u] = true;
            }
        }
        for &u in &groups[t] {
            total += user_rate(columns, &set, u)?;
        }
    }
    Ok(total)
}

fn prepare(channel: &EffectiveChannel, theta: &[Complex64], precoders: &PrecoderSet) -> Vec<Vec<CVector>> {
    columns_of(&channel.whitened().compose(theta), precoders)
}

/// Sum rate `Σ_t Σ_{k ∈ G_t} R_{t,k}` of a grouping.
pub fn sum_rate(
    channel: &EffectiveChannel,
    theta: &[Complex64],
    precoders: &PrecoderSet,
    grouping: &Grouping,
) -> Result<f64, SicError> {
    sum_rate_columns(&prepare(channel, theta, precoders), &grouping.groups)
}

/// Greedy grouping followed by neighbour moves; returns the grouping and
/// the sum rate after the initial fill and after each accepted move.
pub fn group_users_traced(
    channel: &EffectiveChannel,
    theta: &[Complex64],
    precoders: &PrecoderSet,
    t_max: usize,
) -> Result<(Grouping, Vec<f64>), SicError> {
    let k = channel.k();
    if t_max == 0 || k == 0 {
        return Err(SicError::InvalidRequest("need at least one user and one group".into()));
    }
    let columns = prepare(channel, theta, precoders);
    let mut remaining = vec![true; k];
    let mut groups: Vec<Vec<usize>> = Vec::with_capacity(t_max);
    for t in 0..t_max {
        let size = k / t_max + usize::from(t < k % t_max);
        let rates = rates_within(&columns, &remaining)?;
        let mut order: Vec<usize> = (0..k).filter(|&u| remaining[u]).collect();
        order.sort_by(|&a, &b| rates[b].total_cmp(&rates[a]).then(a.cmp(&b)));
        order.truncate(size);
        for &u in &order {
            remaining[u] = false;
        }
        order.sort_unstable();
        groups.push(order);
    }
    let mut best = sum_rate_columns(&columns, &groups)?;
    let mut trace = vec![best];
    let moved = |groups: &[Vec<usize>], user: usize, from: usize, to: usize| -> Vec<Vec<usize>> {
        let mut g = groups.to_vec();
        g[from].retain(|&u| u != user);
        g[to].push(user);
        g[to].sort_unstable();
        g
    };
    let improves = |cand: f64, base: f64| cand > base + 1e-12 * base.abs().max(1.0);
    loop {
        let mut changed = false;
        for user in 0..k {
            let t = groups.iter().position(|g| g.contains(&user)).expect("user is grouped");
            let pre_groups = (t > 0).then(|| moved(&groups, user, t, t - 1));
            let sub_groups = (t + 1 < t_max).then(|| moved(&groups, user, t, t + 1));
            let pre = match &pre_groups {
                Some(g) => sum_rate_columns(&columns, g)?,
                None => best,
            };
            let sub = match &sub_groups {
                Some(g) => sum_rate_columns(&columns, g)?,
                None => best,
            };
            if improves(pre, best) && pre >= sub {
                groups = pre_groups.expect("pre move exists");
                best = pre;
            } else if improves(sub, best) && sub > pre {
                groups = sub_groups.expect("sub move exists");
                best = sub;
            } else {
                continue;
            }
            trace.push(best);
            changed = true;
        }
        if !changed {
            break;
        }
    }
    Ok((Grouping { groups }, trace))
}

pub fn group_users(
    channel: &EffectiveChannel,
    theta: &[Complex64],
    precoders: &PrecoderSet,
    t_max: usize,
) -> Result<Grouping, SicError> {
    Ok(group_users_traced(channel, theta, precoders, t_max)?.0)
}

/// Best sum rate over all `T^K` assignments of users to groups.
pub fn exhaustive_grouping(
    channel: &EffectiveChannel,
    theta: &[Complex64],
    precoders: &PrecoderSet,
    t_max: usize,
) -> Result<(Grouping, f64), SicError> {
    let k = channel.k();
    if k > 10 || t_max == 0 {
        return Err(SicError::InvalidRequest("exhaustive search is limited to K <= 10".into()));
    }
    let columns = prepare(channel, theta, precoders);
    let mut best = (Vec::new(), f64::NEG_INFINITY);
    let total = t_max.pow(k as u32);
    for code in 0..total {
        let mut groups = vec![Vec::new(); t_max];
        let mut c = code;
        for u in 0..k {
            groups[c % t_max].push(u);
            c /= t_max;
        }
        let r = sum_rate_columns(&columns, &groups)?;
        if r > best.1 {
            best = (groups, r);
        }
    }
    Ok((Grouping { groups: best.0 }, best.1))
}

//! Per-mini-slot RB allocation.
//!
//! The main loop hands every free RB to its leader (the eligible UE with the
//! highest metric), visiting RBs in descending order of the leader's reported
//! CQI. Each UE keeps only the prefix of its RBs that maximizes the TB size
//! under the estimated CQIs; the rest go back to the pool. UEs whose buffer
//! fits are dropped and the loop repeats until no RB helps anyone. RBs with a
//! reported CQI of 0 are only touched by [`deadline_fallback`].

use crate::phy::PhyTables;

/// Head-of-line packet of a UE.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HolPacket {
    pub remaining_bits: u64,
    /// Last mini-slot (exclusive end) by which the packet must be received.
    pub deadline_tick: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UeSchedState {
    pub id: u32,
    /// Bits waiting for transmission (not in flight).
    pub buffer_bits: u64,
    pub hol: Option<HolPacket>,
    /// Last reported CQI per RB (an RB inherits its subband's value).
    pub reported_cqi: Vec<u8>,
    /// CQI expected at transmission time, per RB.
    pub estimated_cqi: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Allocation {
    pub ue: u32,
    pub rbs: Vec<usize>,
    pub mcs: u8,
    pub tb_bits: u64,
    pub is_fallback: bool,
}

/// Scheduling priority of `ue` on `rb`; larger wins.
pub trait SchedulingMetric {
    /// Whether the value depends on the RB; if not it is evaluated once per UE.
    const PER_RB: bool = false;

    fn metric(&self, ue: &UeSchedState, rb: usize, now_tick: u64) -> f64;
}

/// `1 / (deadline - now)` of the head-of-line packet.
#[derive(Debug, Clone, Copy, Default)]
pub struct EarliestDeadlineFirst;

impl SchedulingMetric for EarliestDeadlineFirst {
    fn metric(&self, ue: &UeSchedState, _rb: usize, now_tick: u64) -> f64 {
        match ue.hol {
            Some(h) => 1.0 / (h.deadline_tick.saturating_sub(now_tick).max(1)) as f64,
            None => 0.0,
        }
    }
}

/// Result of the maximal-TB prefix search.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TbChoice {
    pub rbs: Vec<usize>,
    pub mcs: Option<u8>,
    pub tb_bits: u64,
}

/// Picks the prefix (by estimated SNR, best first) with the largest TB.
///
/// Each prefix is compressed with EESM, given the highest MCS meeting the
/// target BLER and sized with that MCS on all of its RBs. Ties go to the
/// shortest prefix. An empty choice means no prefix supports even MCS 0.
pub fn max_tb_subset(phy: &PhyTables, rbs: &[(usize, u8)]) -> TbChoice {
    let mut sorted = rbs.to_vec();
    sorted.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));

    let num_mcs = phy.mcs_table().len();
    let mut sums = vec![0.0; num_mcs];
    // The effective SNR never rises along the prefix, so neither does the MCS.
    let mut mcs = Some(phy.mcs_table().highest());
    let mut best_k = 0;
    let mut best = (None, 0u64);
    for (i, &(_, cqi)) in sorted.iter().enumerate() {
        for (m, s) in sums.iter_mut().enumerate() {
            *s += phy.cqi_weight(m as u8, cqi);
        }
        let k = i + 1;
        while let Some(m) = mcs {
            if phy.weight_meets_target(m, sums[m as usize] / k as f64) {
                break;
            }
            mcs = m.checked_sub(1);
        }
        let Some(m) = mcs else { break };
        let tb = phy.tb_bits(m, k);
        if tb > best.1 {
            best = (Some(m), tb);
            best_k = k;
        }
    }
    TbChoice {
        rbs: sorted[..best_k].iter().map(|&(rb, _)| rb).collect(),
        mcs: best.0,
        tb_bits: best.1,
    }
}

fn choice_for(phy: &PhyTables, ue: &UeSchedState, rbs: &[usize]) -> TbChoice {
    let tagged: Vec<(usize, u8)> = rbs.iter().map(|&rb| (rb, ue.estimated_cqi[rb])).collect();
    max_tb_subset(phy, &tagged)
}

// Largest TB any prefix of `rbs` could reach: every RB at the MCS of the best one.
fn tb_upper_bound(phy: &PhyTables, ue: &UeSchedState, rbs: &[usize]) -> u64 {
    let best = rbs.iter().map(|&rb| ue.estimated_cqi[rb]).max().unwrap_or(0);
    if best == 0 {
        return 0;
    }
    phy.tb_bits(phy.cqi_map().ref_mcs(best), rbs.len())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleOutcome {
    pub allocations: Vec<Allocation>,
    /// Passes of the leader/assign/trim loop.
    pub iterations: usize,
}

/// Full allocation for one mini-slot: main loop, then [`deadline_fallback`].
pub fn schedule<M: SchedulingMetric>(
    phy: &PhyTables,
    metric: &M,
    ues: &[UeSchedState],
    num_rbs: usize,
    now_tick: u64,
) -> Vec<Allocation> {
    schedule_detailed(phy, metric, ues, num_rbs, now_tick).allocations
}

pub fn schedule_detailed<M: SchedulingMetric>(
    phy: &PhyTables,
    metric: &M,
    ues: &[UeSchedState],
    num_rbs: usize,
    now_tick: u64,
) -> ScheduleOutcome {
    let n_ue = ues.len();
    let mut active: Vec<bool> = ues.iter().map(|u| u.buffer_bits > 0).collect();
    let mut current: Vec<TbChoice> = vec![TbChoice::default(); n_ue];
    let mut owner: Vec<Option<usize>> = vec![None; num_rbs];
    // (ue, rb) pairs already offered; an RB that did not help a UE is not
    // offered to it again, so other UEs can lead it.
    let mut tried = vec![false; n_ue * num_rbs];
    let metrics: Vec<f64> = ues.iter().map(|u| metric.metric(u, 0, now_tick)).collect();
    let mut iterations = 0;

    loop {
        // leaders of the free RBs
        let mut led: Vec<(usize, usize)> = Vec::new();
        for rb in (0..num_rbs).filter(|&rb| owner[rb].is_none()) {
            let mut leader: Option<usize> = None;
            for (u, ue) in ues.iter().enumerate() {
                if !active[u] || ue.reported_cqi[rb] == 0 || tried[u * num_rbs + rb] {
                    continue;
                }
                let better = match leader {
                    None => true,
                    Some(l) => {
                        let (mu, ml) = if M::PER_RB {
                            (metric.metric(ue, rb, now_tick), metric.metric(&ues[l], rb, now_tick))
                        } else {
                            (metrics[u], metrics[l])
                        };
                        mu > ml || (mu == ml && ue.id < ues[l].id)
                    }
                };
                if better {
                    leader = Some(u);
                }
            }
            if let Some(l) = leader {
                led.push((rb, l));
            }
        }
        if led.is_empty() {
            break;
        }
        iterations += 1;
        led.sort_by(|a, b| {
            ues[b.1].reported_cqi[b.0]
                .cmp(&ues[a.1].reported_cqi[a.0])
                .then(a.0.cmp(&b.0))
        });

        // greedy assignment, a leader stops taking RBs once its buffer fits
        let mut offered: Vec<Vec<usize>> = vec![Vec::new(); n_ue];
        let mut fits = vec![false; n_ue];
        for &(rb, u) in &led {
            if fits[u] {
                continue;
            }
            tried[u * num_rbs + rb] = true;
            offered[u].push(rb);
            let mut pool = current[u].rbs.clone();
            pool.extend_from_slice(&offered[u]);
            if tb_upper_bound(phy, &ues[u], &pool) >= ues[u].buffer_bits
                && choice_for(phy, &ues[u], &pool).tb_bits >= ues[u].buffer_bits
            {
                fits[u] = true;
            }
        }

        // keep the best prefix per UE, return the rest
        for u in 0..n_ue {
            if offered[u].is_empty() {
                continue;
            }
            let mut pool = current[u].rbs.clone();
            pool.extend_from_slice(&offered[u]);
            let choice = choice_for(phy, &ues[u], &pool);
            if choice.tb_bits > current[u].tb_bits {
                for &rb in &current[u].rbs {
                    owner[rb] = None;
                }
                for &rb in &choice.rbs {
                    owner[rb] = Some(u);
                }
                current[u] = choice;
            }
            if current[u].tb_bits >= ues[u].buffer_bits {
                active[u] = false;
            }
        }
    }

    let mut allocations: Vec<Allocation> = current
        .into_iter()
        .enumerate()
        .filter_map(|(u, c)| {
            let mcs = c.mcs?;
            let mut rbs = c.rbs;
            rbs.sort_unstable();
            Some(Allocation {
                ue: ues[u].id,
                rbs,
                mcs,
                tb_bits: c.tb_bits,
                is_fallback: false,
            })
        })
        .collect();
    deadline_fallback(phy, ues, &mut allocations, num_rbs);
    ScheduleOutcome {
        allocations,
        iterations,
    }
}

/// UE indices by head-of-line deadline, then id.
fn urgency_order(ues: &[UeSchedState]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..ues.len()).collect();
    order.sort_by_key(|&u| (ues[u].hol.map_or(u64::MAX, |h| h.deadline_tick), ues[u].id));
    order
}

/// MCS 0 on reported-CQI-0 RBs for UEs that would otherwise miss a deadline.
///
/// A UE qualifies when its allocation (if any) uses MCS 0 and does not carry
/// the head-of-line packet's remaining bits. It gets the fewest spare CQI-0
/// RBs, best estimate first, that make the MCS 0 TB large enough; if all of
/// them are not enough the allocation is left alone.
pub fn deadline_fallback(phy: &PhyTables, ues: &[UeSchedState], allocations: &mut Vec<Allocation>, num_rbs: usize) {
    let mut used = vec![false; num_rbs];
    for a in allocations.iter() {
        for &rb in &a.rbs {
            used[rb] = true;
        }
    }
    for u in urgency_order(ues) {
        let ue = &ues[u];
        let Some(hol) = ue.hol else { continue };
        let pos = allocations.iter().position(|a| a.ue == ue.id);
        let (n_cur, tb_cur) = match pos {
            Some(i) if allocations[i].mcs != 0 => continue,
            Some(i) => (allocations[i].rbs.len(), allocations[i].tb_bits),
            None => (0, 0),
        };
        if tb_cur >= hol.remaining_bits {
            continue;
        }
        let mut spare: Vec<usize> = (0..num_rbs)
            .filter(|&rb| !used[rb] && ue.reported_cqi[rb] == 0)
            .collect();
        spare.sort_by(|&a, &b| ue.estimated_cqi[b].cmp(&ue.estimated_cqi[a]).then(a.cmp(&b)));
        let Some(extra) = (1..=spare.len()).find(|&j| phy.tb_bits(0, n_cur + j) >= hol.remaining_bits) else {
            continue;
        };
        let added = &spare[..extra];
        for &rb in added {
            used[rb] = true;
        }
        let n = n_cur + extra;
        match pos {
            Some(i) => {
                let a = &mut allocations[i];
                a.rbs.extend_from_slice(added);
                a.rbs.sort_unstable();
                a.tb_bits = phy.tb_bits(0, n);
                a.is_fallback = true;
            }
            None => {
                let mut rbs = added.to_vec();
                rbs.sort_unstable();
                allocations.push(Allocation {
                    ue: ue.id,
                    rbs,
                    mcs: 0,
                    tb_bits: phy.tb_bits(0, n),
                    is_fallback: true,
                });
            }
        }
    }
}

/// Reference policy: MCS 0 on the best reported RBs, as many as the queue
/// needs, or every free RB when even that is not enough.
pub fn schedule_mcs0_best(phy: &PhyTables, ues: &[UeSchedState], num_rbs: usize) -> Vec<Allocation> {
    let mut used = vec![false; num_rbs];
    let mut out = Vec::new();
    for u in urgency_order(ues) {
        let ue = &ues[u];
        if ue.buffer_bits == 0 {
            continue;
        }
        let mut free: Vec<usize> = (0..num_rbs).filter(|&rb| !used[rb]).collect();
        if free.is_empty() {
            break;
        }
        free.sort_by(|&a, &b| ue.reported_cqi[b].cmp(&ue.reported_cqi[a]).then(a.cmp(&b)));
        let n = (1..=free.len())
            .find(|&n| phy.tb_bits(0, n) >= ue.buffer_bits)
            .unwrap_or(free.len());
        let mut rbs = free[..n].to_vec();
        for &rb in &rbs {
            used[rb] = true;
        }
        rbs.sort_unstable();
        out.push(Allocation {
            ue: ue.id,
            tb_bits: phy.tb_bits(0, n),
            rbs,
            mcs: 0,
            is_fallback: false,
        });
    }
    out
}

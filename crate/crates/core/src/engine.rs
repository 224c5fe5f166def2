//! Deterministic discrete-event loop for one gNB and one URLLC UE.
//!
//! Time is kept in integer nanoseconds. Mini-slot ticks are only queued
//! while the UE has data to send; idle ticks cannot change any state, so
//! skipping them leaves results unchanged. Same-time events run in kind
//! order: CQI measurement, CQI delivery, packet arrival, scheduling tick,
//! HARQ feedback, packet deadline.
//!
//! A decision taken at tick `n` is transmitted during tick
//! `n + t_sch_delay_slots`. Its outcome is drawn from the BLER at the
//! channel of that air tick and reaches the scheduler at tick
//! `n + harq_gap_slots`, the earliest tick a retransmission can be decided.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{make_process_with, FadingProfile, RbChannel};
use crate::config::{Policy, SimConfig};
use crate::cqi_reporting::{measure, CqiReport, ReportingConfig};
use crate::link_adapt::CqiHistory;
use crate::phy::{db_to_lin, draw_outcome, effective_snr, lin_to_db, PhyTables};
use crate::scheduler::{schedule, schedule_mcs0_best, Allocation, EarliestDeadlineFirst, HolPacket, UeSchedState};
use crate::{Error, Result};

/// Per-run counters and the three KPIs derived from them.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Metrics {
    pub arrived: u64,
    pub delivered: u64,
    /// Packets not fully delivered by their deadline (includes `flushed`).
    pub expired: u64,
    /// Packets whose last allowed HARQ attempt failed.
    pub failed: u64,
    /// Packets still unresolved when the event queue drained.
    pub flushed: u64,
    pub mcs_sum: u64,
    pub attempts: u64,
    pub retransmissions: u64,
    pub rbs_used: u64,
    pub rb_capacity: u64,
}

impl Metrics {
    pub fn plr(&self) -> f64 {
        if self.arrived == 0 {
            return 0.0;
        }
        (self.expired + self.failed) as f64 / self.arrived as f64
    }

    pub fn avg_mcs(&self) -> f64 {
        if self.attempts == 0 {
            return 0.0;
        }
        self.mcs_sum as f64 / self.attempts as f64
    }

    pub fn rb_usage(&self) -> f64 {
        if self.rb_capacity == 0 {
            return 0.0;
        }
        self.rbs_used as f64 / self.rb_capacity as f64
    }

    pub fn lost(&self) -> u64 {
        self.expired + self.failed
    }

    /// Every arrival is accounted for exactly once.
    pub fn is_conserved(&self) -> bool {
        self.arrived == self.delivered + self.expired + self.failed
    }
}

/// Chase combining: effective SNRs of both attempts add in the linear domain.
pub fn harq_combine(first_db: f64, second_db: f64) -> f64 {
    lin_to_db(db_to_lin(first_db) + db_to_lin(second_db))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Kind {
    Measure,
    Deliver,
    Arrival,
    Tick,
    Feedback,
    Deadline,
}

#[derive(Debug)]
enum Payload {
    Measure,
    Deliver(CqiReport),
    Arrival(u64),
    Tick(u64),
    Feedback(usize),
    Deadline(usize),
}

#[derive(Debug)]
struct Event {
    time: u64,
    kind: Kind,
    seq: u64,
    payload: Payload,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // reversed: BinaryHeap pops the earliest event first
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.kind, other.seq).cmp(&(self.time, self.kind, self.seq))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Fate {
    Pending,
    Delivered,
    Expired,
    Failed,
}

#[derive(Debug)]
struct Packet {
    deadline_tick: u64,
    bits: u64,
    acked: u64,
    in_flight: u64,
    /// Bits not yet sent.
    fresh: u64,
    /// NACKed bits awaiting their next attempt: (bits, attempts so far,
    /// linear effective SNR of the failed attempt).
    retx: Vec<(u64, u32, f64)>,
    deadline_passed: bool,
    fate: Fate,
}

impl Packet {
    fn pending(&self) -> u64 {
        self.fresh + self.retx.iter().map(|r| r.0).sum::<u64>()
    }
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    packet: usize,
    bits: u64,
    attempt: u32,
}

#[derive(Debug)]
struct InFlight {
    segments: Vec<Segment>,
    success: bool,
    eff_lin: f64,
}

/// Debug trace sink: one CSV row per subband and scheduling decision.
struct Trace<'w> {
    out: csv::Writer<&'w mut dyn Write>,
}

struct Sim<'a> {
    cfg: &'a SimConfig,
    phy: PhyTables,
    reporting: ReportingConfig,
    channel: RbChannel,
    rng: ChaCha8Rng,
    queue: BinaryHeap<Event>,
    seq: u64,
    slot_ns: u64,
    budget_ticks: u64,
    history: Option<CqiHistory>,
    last_report: Option<CqiReport>,
    packets: Vec<Packet>,
    // unresolved packets in arrival (= deadline) order
    open: Vec<usize>,
    in_flight: Vec<Option<InFlight>>,
    free_slots: Vec<usize>,
    queued_ticks: HashSet<u64>,
    snr_tick: Option<u64>,
    snr: Vec<f64>,
    metrics: Metrics,
    trace: Option<Trace<'a>>,
}

fn ue_seed(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Simulates `cfg.duration_s` of traffic under `cfg.policy` with one seed.
pub fn run(cfg: &SimConfig, seed: u64) -> Result<Metrics> {
    Sim::new(cfg, seed, None)?.run()
}

/// Like [`run`], also writing the conservative estimator's state at every
/// scheduling decision as CSV to `out`.
pub fn run_traced(cfg: &SimConfig, seed: u64, out: &mut dyn Write) -> Result<Metrics> {
    let trace = Trace {
        out: csv::Writer::from_writer(out),
    };
    let mut sim = Sim::new(cfg, seed, Some(trace))?;
    sim.write_trace_header()?;
    sim.run()
}

impl<'a> Sim<'a> {
    fn new(cfg: &'a SimConfig, seed: u64, trace: Option<Trace<'a>>) -> Result<Self> {
        cfg.validate()?;
        let phy = cfg.phy_tables();
        let channel_seed = ue_seed(seed, 0).next_u64();
        let process = make_process_with(
            FadingProfile::builtin(cfg.profile),
            cfg.doppler_hz(),
            channel_seed,
            cfg.num_sinusoids,
        )?;
        let channel = RbChannel::new(process, &cfg.grid);
        let history = (cfg.policy == Policy::Conservative)
            .then(|| CqiHistory::new(cfg.timing(), cfg.cqi_mode, cfg.num_subbands(), cfg.wnd as usize));
        let slot_ns = cfg.slot_ns();
        let ticks = cfg.duration_ns().div_ceil(slot_ns);
        Ok(Self {
            cfg,
            phy,
            reporting: cfg.reporting(),
            channel,
            rng: ue_seed(seed, 1),
            queue: BinaryHeap::new(),
            seq: 0,
            slot_ns,
            budget_ticks: cfg.delay_budget_ticks(),
            history,
            last_report: None,
            packets: Vec::new(),
            open: Vec::new(),
            in_flight: Vec::new(),
            free_slots: Vec::new(),
            queued_ticks: HashSet::new(),
            snr_tick: None,
            snr: vec![0.0; cfg.grid.num_rbs],
            metrics: Metrics {
                rb_capacity: ticks * cfg.grid.num_rbs as u64,
                ..Metrics::default()
            },
            trace,
        })
    }

    fn push(&mut self, time: u64, kind: Kind, payload: Payload) {
        self.seq += 1;
        self.queue.push(Event {
            time,
            kind,
            seq: self.seq,
            payload,
        });
    }

    fn push_tick(&mut self, tick: u64) {
        if self.queued_ticks.insert(tick) {
            self.push(tick * self.slot_ns, Kind::Tick, Payload::Tick(tick));
        }
    }

    fn run(mut self) -> Result<Metrics> {
        let duration = self.cfg.duration_ns();
        // reports keep flowing while the last packets drain
        let drain = (self.budget_ticks + self.cfg.harq_gap_slots as u64 + 2) * self.slot_ns;
        let report_horizon = duration + drain + self.cfg.t_cqi_ns();
        let t_cqi = self.cfg.t_cqi_ns();

        self.push(0, Kind::Measure, Payload::Measure);
        if duration > 0 {
            self.push(0, Kind::Arrival, Payload::Arrival(0));
        }

        while let Some(ev) = self.queue.pop() {
            match ev.payload {
                Payload::Measure => {
                    self.on_measure(ev.time);
                    let next = ev.time + t_cqi;
                    if next <= report_horizon && (next <= duration || !self.open.is_empty()) {
                        self.push(next, Kind::Measure, Payload::Measure);
                    }
                }
                Payload::Deliver(report) => self.on_deliver(report)?,
                Payload::Arrival(id) => {
                    self.on_arrival(ev.time);
                    let next = (id + 1) * self.cfg.interarrival_ns();
                    if next < duration {
                        self.push(next, Kind::Arrival, Payload::Arrival(id + 1));
                    }
                }
                Payload::Tick(n) => {
                    self.queued_ticks.remove(&n);
                    self.on_tick(n)?;
                }
                Payload::Feedback(slot) => self.on_feedback(ev.time / self.slot_ns, slot),
                Payload::Deadline(p) => self.on_deadline(p),
            }
        }

        for &p in &self.open {
            if self.packets[p].fate == Fate::Pending {
                self.metrics.flushed += 1;
                self.metrics.expired += 1;
            }
        }
        if let Some(t) = self.trace.as_mut() {
            t.out.flush().map_err(|e| Error::Trace(e.to_string()))?;
        }
        debug_assert!(self.metrics.is_conserved());
        Ok(self.metrics)
    }

    fn channel_at(&mut self, tick: u64) {
        if self.snr_tick != Some(tick) {
            let t = (tick * self.slot_ns) as f64 * 1e-9;
            self.channel.snr_db_into(t, self.cfg.geometry_db, &mut self.snr);
            self.snr_tick = Some(tick);
        }
    }

    fn on_measure(&mut self, time: u64) {
        // block-constant channel: sample at the start of the enclosing mini-slot
        self.channel_at(time / self.slot_ns);
        let report = measure(&self.snr, time as f64 * 1e-9, &self.reporting, &self.phy);
        let deliver = time + self.cfg.t_cqi_delay_slots as u64 * self.slot_ns;
        self.push(deliver, Kind::Deliver, Payload::Deliver(report));
    }

    fn on_deliver(&mut self, report: CqiReport) -> Result<()> {
        if let Some(h) = self.history.as_mut() {
            h.on_report(&report)?;
        }
        self.last_report = Some(report);
        Ok(())
    }

    fn on_arrival(&mut self, time: u64) {
        let arrival_tick = time.div_ceil(self.slot_ns);
        let deadline_tick = arrival_tick + self.budget_ticks;
        let id = self.packets.len();
        self.packets.push(Packet {
            deadline_tick,
            bits: self.cfg.packet_bits,
            acked: 0,
            in_flight: 0,
            fresh: self.cfg.packet_bits,
            retx: Vec::new(),
            deadline_passed: false,
            fate: Fate::Pending,
        });
        self.open.push(id);
        self.metrics.arrived += 1;
        self.push(deadline_tick * self.slot_ns, Kind::Deadline, Payload::Deadline(id));
        self.push_tick(arrival_tick);
    }

    /// Air-time end tick of a transmission decided at `tick`.
    fn air_end(&self, tick: u64) -> u64 {
        tick + self.cfg.t_sch_delay_slots as u64 + 1
    }

    fn eligible(&self, tick: u64) -> impl Iterator<Item = usize> + use<'_, 'a> {
        let end = self.air_end(tick);
        self.open.iter().copied().filter(move |&p| {
            let pk = &self.packets[p];
            pk.fate == Fate::Pending && pk.deadline_tick >= end && pk.pending() > 0
        })
    }

    fn ue_state(&self, tick: u64) -> Result<Option<UeSchedState>> {
        let mut buffer_bits = 0;
        let mut hol = None;
        for p in self.eligible(tick) {
            let pk = &self.packets[p];
            let pending = pk.pending();
            if hol.is_none() {
                hol = Some(HolPacket {
                    remaining_bits: pending,
                    deadline_tick: pk.deadline_tick,
                });
            }
            buffer_bits += pending;
        }
        if buffer_bits == 0 {
            return Ok(None);
        }
        let num_rbs = self.cfg.grid.num_rbs;
        let sb_rbs = self.cfg.subband_rbs;
        let (reported_cqi, estimated_cqi) = match (&self.last_report, self.cfg.policy) {
            (None, Policy::Mcs0Best) => (vec![0; num_rbs], vec![0; num_rbs]),
            (None, _) => return Ok(None),
            (Some(r), policy) => {
                let reported: Vec<u8> = (0..num_rbs).map(|rb| r.subband_cqi[rb / sb_rbs]).collect();
                let estimated = match (policy, &self.history) {
                    (Policy::Conservative, Some(h)) => {
                        let t_sch = (tick * self.slot_ns) as f64 * 1e-9;
                        let per_sb = (0..self.cfg.num_subbands())
                            .map(|sb| h.estimate_cqi(sb, t_sch))
                            .collect::<Result<Vec<u8>>>()?;
                        (0..num_rbs).map(|rb| per_sb[rb / sb_rbs]).collect()
                    }
                    _ => reported.clone(),
                };
                (reported, estimated)
            }
        };
        Ok(Some(UeSchedState {
            id: 0,
            buffer_bits,
            hol,
            reported_cqi,
            estimated_cqi,
        }))
    }

    fn on_tick(&mut self, tick: u64) -> Result<()> {
        if let Some(ue) = self.ue_state(tick)? {
            self.decide(tick, &ue)?;
        }
        if self.eligible(tick + 1).next().is_some() {
            self.push_tick(tick + 1);
        }
        Ok(())
    }

    fn decide(&mut self, tick: u64, ue: &UeSchedState) -> Result<()> {
        if self.trace.is_some() {
            self.write_trace(tick)?;
        }
        let num_rbs = self.cfg.grid.num_rbs;
        let allocations = match self.cfg.policy {
            Policy::Mcs0Best => schedule_mcs0_best(&self.phy, std::slice::from_ref(ue), num_rbs),
            Policy::LastCqi | Policy::Conservative => schedule(
                &self.phy,
                &EarliestDeadlineFirst,
                std::slice::from_ref(ue),
                num_rbs,
                tick,
            ),
        };
        for a in allocations {
            self.transmit(tick, &a);
        }
        Ok(())
    }

    fn transmit(&mut self, tick: u64, alloc: &Allocation) {
        if alloc.tb_bits == 0 || alloc.rbs.is_empty() {
            return;
        }
        // fill the TB head-of-line first, retransmissions before fresh bits
        let mut room = alloc.tb_bits;
        let mut segments = Vec::new();
        let mut first_attempt_lin = f64::INFINITY;
        let mut all_retx = true;
        let eligible: Vec<usize> = self.eligible(tick).collect();
        for p in eligible {
            if room == 0 {
                break;
            }
            let pk = &mut self.packets[p];
            while room > 0 {
                let Some(last) = pk.retx.last_mut() else { break };
                let take = last.0.min(room);
                segments.push(Segment {
                    packet: p,
                    bits: take,
                    attempt: last.1 + 1,
                });
                first_attempt_lin = first_attempt_lin.min(last.2);
                last.0 -= take;
                room -= take;
                if last.0 == 0 {
                    pk.retx.pop();
                }
            }
            if room > 0 && pk.fresh > 0 {
                let take = pk.fresh.min(room);
                segments.push(Segment {
                    packet: p,
                    bits: take,
                    attempt: 1,
                });
                all_retx = false;
                pk.fresh -= take;
                room -= take;
            }
        }
        if segments.is_empty() {
            return;
        }
        for s in &segments {
            self.packets[s.packet].in_flight += s.bits;
        }

        let air_tick = tick + self.cfg.t_sch_delay_slots as u64;
        self.channel_at(air_tick);
        let snrs: Vec<f64> = alloc.rbs.iter().map(|&rb| self.snr[rb]).collect();
        let beta = self.phy.mcs(alloc.mcs).beta;
        let eff_db = effective_snr(&snrs, beta).expect("allocation has RBs");
        let decoded_db = if all_retx && first_attempt_lin.is_finite() {
            harq_combine(lin_to_db(first_attempt_lin), eff_db)
        } else {
            eff_db
        };
        let p_error = self.phy.bler(alloc.mcs, decoded_db);
        let success = draw_outcome(&mut self.rng, p_error);

        let m = &mut self.metrics;
        m.attempts += 1;
        m.mcs_sum += alloc.mcs as u64;
        m.rbs_used += alloc.rbs.len() as u64;
        if segments.iter().any(|s| s.attempt > 1) {
            m.retransmissions += 1;
        }

        let record = InFlight {
            segments,
            success,
            eff_lin: db_to_lin(eff_db),
        };
        let slot = match self.free_slots.pop() {
            Some(i) => {
                self.in_flight[i] = Some(record);
                i
            }
            None => {
                self.in_flight.push(Some(record));
                self.in_flight.len() - 1
            }
        };
        let feedback_tick = tick + self.cfg.harq_gap_slots as u64;
        self.push(feedback_tick * self.slot_ns, Kind::Feedback, Payload::Feedback(slot));
    }

    fn resolve(&mut self, p: usize, fate: Fate) {
        let pk = &mut self.packets[p];
        if pk.fate != Fate::Pending {
            return;
        }
        pk.fate = fate;
        match fate {
            Fate::Delivered => self.metrics.delivered += 1,
            Fate::Expired => self.metrics.expired += 1,
            Fate::Failed => self.metrics.failed += 1,
            Fate::Pending => unreachable!(),
        }
        if let Some(i) = self.open.iter().position(|&q| q == p) {
            self.open.remove(i);
        }
    }

    fn on_feedback(&mut self, tick: u64, slot: usize) {
        let tb = self.in_flight[slot].take().expect("feedback for a live TB");
        self.free_slots.push(slot);
        let max_attempts = self.cfg.max_retx + 1;
        for s in &tb.segments {
            let pk = &mut self.packets[s.packet];
            pk.in_flight -= s.bits;
            if pk.fate != Fate::Pending {
                continue;
            }
            if tb.success {
                pk.acked += s.bits;
                if pk.acked == pk.bits {
                    self.resolve(s.packet, Fate::Delivered);
                }
            } else if s.attempt >= max_attempts {
                self.resolve(s.packet, Fate::Failed);
            } else {
                pk.retx.push((s.bits, s.attempt, tb.eff_lin));
            }
        }
        for s in &tb.segments {
            let pk = &self.packets[s.packet];
            if pk.fate == Fate::Pending && pk.deadline_passed && pk.in_flight == 0 {
                self.resolve(s.packet, Fate::Expired);
            }
        }
        if self.eligible(tick + 1).next().is_some() {
            self.push_tick(tick + 1);
        }
    }

    fn on_deadline(&mut self, p: usize) {
        let pk = &mut self.packets[p];
        if pk.fate != Fate::Pending {
            return;
        }
        if pk.in_flight > 0 {
            pk.deadline_passed = true;
        } else {
            self.resolve(p, Fate::Expired);
        }
    }

    fn write_trace_header(&mut self) -> Result<()> {
        let lags = self.history.as_ref().map_or(0, |h| h.max_lag());
        let Some(t) = self.trace.as_mut() else { return Ok(()) };
        let mut header = vec!["t_s".to_string(), "subband".into(), "last_cqi".into()];
        header.extend((1..=lags).map(|k| format!("delta_lag{k}")));
        header.push("estimate".into());
        t.out.write_record(&header).map_err(|e| Error::Trace(e.to_string()))
    }

    fn write_trace(&mut self, tick: u64) -> Result<()> {
        let (Some(h), Some(t)) = (self.history.as_ref(), self.trace.as_mut()) else {
            return Ok(());
        };
        let Some((_, last)) = h.last_report() else {
            return Ok(());
        };
        let t_sch = (tick * self.slot_ns) as f64 * 1e-9;
        for (sb, &cqi) in last.iter().enumerate() {
            let mut row = vec![format!("{t_sch:.7}"), sb.to_string(), cqi.to_string()];
            row.extend(h.lag_maxima(sb).iter().map(i32::to_string));
            row.push(h.estimate_cqi(sb, t_sch)?.to_string());
            t.out.write_record(&row).map_err(|e| Error::Trace(e.to_string()))?;
        }
        Ok(())
    }
}

//! Discrete-event job shop.
//!
//! Each machine serves one lot at a time from a FIFO queue: a lognormal
//! setup followed by `lotsize * processing_time` minutes. Lots move to the
//! next routing stage as a whole once a stage is finished.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mrp::{OrderId, ProductionOrder};
use crate::system::{ItemId, MachineId, ProductionSystemConfig};
use crate::{Minutes, Pieces};

/// Lognormal setup time with the given mean and coefficient of variation.
///
/// With `s^2 = ln(1 + cv^2)` and `m = ln(mean) - s^2 / 2` the draw
/// `exp(N(m, s))` has exactly the requested mean and cv. `cv == 0` returns
/// the mean.
pub fn sample_setup<R: rand::Rng + ?Sized>(mean: Minutes, cv: f64, rng: &mut R) -> Minutes {
    if cv == 0.0 {
        return mean;
    }
    let shape_sq = (1.0 + cv * cv).ln();
    let scale = mean.ln() - shape_sq / 2.0;
    LogNormal::new(scale, shape_sq.sqrt())
        .expect("valid lognormal parameters")
        .sample(rng)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventKind {
    OrderReleased,
    OperationComplete,
    PeriodBoundary,
}

impl EventKind {
    fn rank(self) -> u8 {
        match self {
            Self::PeriodBoundary => 1,
            _ => 0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::OrderReleased => "released",
            Self::OperationComplete => "operation-complete",
            Self::PeriodBoundary => "period-boundary",
        }
    }
}

#[derive(Clone, Debug)]
enum Payload {
    Release(Lot),
    Complete(MachineId),
}

#[derive(Clone, Debug)]
pub struct SimEvent {
    pub time: Minutes,
    pub kind: EventKind,
    seq: u64,
    payload: Payload,
}

impl PartialEq for SimEvent {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for SimEvent {}

impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SimEvent {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.kind.rank().cmp(&other.kind.rank()))
            .then(self.seq.cmp(&other.seq))
    }
}

/// A released lot travelling through its routing.
#[derive(Clone, Debug, PartialEq)]
pub struct Lot {
    pub order: OrderId,
    pub item: ItemId,
    pub lotsize: Pieces,
    pub routing: Vec<MachineId>,
    pub stage: usize,
    pub processing_time: Minutes,
    pub released_at: Minutes,
    /// Setup plus processing minutes spent so far.
    pub work: Minutes,
}

#[derive(Clone, Debug)]
pub struct MachineState {
    pub id: MachineId,
    pub queue: VecDeque<Lot>,
    /// Lot in process with its start and completion time.
    pub current: Option<(Lot, Minutes, Minutes)>,
    busy_completed: Minutes,
    setup_mean: Minutes,
    setup_cv: f64,
    rng: ChaCha8Rng,
}

impl MachineState {
    pub fn is_idle(&self) -> bool {
        self.current.is_none()
    }

    /// Busy minutes up to `now`, counting the running operation pro rata.
    pub fn busy_minutes(&self, now: Minutes) -> Minutes {
        self.busy_completed
            + self
                .current
                .as_ref()
                .map(|(_, start, _)| (now - start).max(0.0))
                .unwrap_or(0.0)
    }
}

/// A lot that finished its last routing stage.
#[derive(Clone, Debug, PartialEq)]
pub struct Completion {
    pub order: OrderId,
    pub item: ItemId,
    pub lotsize: Pieces,
    pub released_at: Minutes,
    pub time: Minutes,
    pub work: Minutes,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventTraceRow {
    pub time: Minutes,
    pub event: String,
    pub order: Option<OrderId>,
    pub machine: Option<u32>,
}

#[derive(Clone, Debug)]
pub struct ShopFloor {
    now: Minutes,
    events: BinaryHeap<Reverse<SimEvent>>,
    machines: BTreeMap<MachineId, MachineState>,
    seq: u64,
    trace: Option<Vec<EventTraceRow>>,
}

impl ShopFloor {
    /// Every machine draws setups from its own substream of `seed`.
    pub fn new(system: &ProductionSystemConfig, seed: u64) -> Self {
        let machines = system
            .machines
            .iter()
            .map(|m| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(m.id.0 as u64);
                (
                    m.id,
                    MachineState {
                        id: m.id,
                        queue: VecDeque::new(),
                        current: None,
                        busy_completed: 0.0,
                        setup_mean: m.setup_time_mean,
                        setup_cv: m.setup_cv,
                        rng,
                    },
                )
            })
            .collect();
        Self {
            now: 0.0,
            events: BinaryHeap::new(),
            machines,
            seq: 0,
            trace: None,
        }
    }

    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn now(&self) -> Minutes {
        self.now
    }

    pub fn machines(&self) -> impl Iterator<Item = &MachineState> {
        self.machines.values()
    }

    pub fn machine(&self, id: MachineId) -> Option<&MachineState> {
        self.machines.get(&id)
    }

    pub fn trace(&self) -> Option<&[EventTraceRow]> {
        self.trace.as_deref()
    }

    fn record(&mut self, event: EventKind, order: Option<OrderId>, machine: Option<MachineId>) {
        let time = self.now;
        if let Some(t) = self.trace.as_mut() {
            t.push(EventTraceRow {
                time,
                event: event.label().to_string(),
                order,
                machine: machine.map(|m| m.0),
            });
        }
    }

    fn push(&mut self, time: Minutes, kind: EventKind, payload: Payload) {
        self.seq += 1;
        self.events.push(Reverse(SimEvent {
            time,
            kind,
            seq: self.seq,
            payload,
        }));
    }

    /// Releases an order to the shop at the current time; the lot joins the
    /// queue of its first routing machine.
    pub fn dispatch(&mut self, order: &ProductionOrder, system: &ProductionSystemConfig) -> Result<()> {
        let item = system.item(order.item)?;
        for m in &item.routing {
            if !self.machines.contains_key(m) {
                return Err(crate::Error::UnknownMachine(*m));
            }
        }
        let lot = Lot {
            order: order.id,
            item: order.item,
            lotsize: order.lotsize,
            routing: item.routing.clone(),
            stage: 0,
            processing_time: item.processing_time,
            released_at: self.now,
            work: 0.0,
        };
        self.push(self.now, EventKind::OrderReleased, Payload::Release(lot));
        Ok(())
    }

    fn enqueue(&mut self, lot: Lot) {
        let id = lot.routing[lot.stage];
        self.machines
            .get_mut(&id)
            .expect("routing validated at dispatch")
            .queue
            .push_back(lot);
        self.try_start(id);
    }

    fn try_start(&mut self, id: MachineId) {
        let now = self.now;
        let machine = self.machines.get_mut(&id).expect("known machine");
        if !machine.is_idle() {
            return;
        }
        let Some(mut lot) = machine.queue.pop_front() else {
            return;
        };
        let setup = sample_setup(machine.setup_mean, machine.setup_cv, &mut machine.rng);
        let duration = setup + lot.lotsize as Minutes * lot.processing_time;
        lot.work += duration;
        let end = now + duration;
        machine.current = Some((lot, now, end));
        self.push(end, EventKind::OperationComplete, Payload::Complete(id));
    }

    /// Processes events up to and including `until`.
    ///
    /// Returns at the first lot that leaves its last stage so the caller can
    /// book it (and release follow-up work at [`Self::now`]); returns `None`
    /// once the clock has reached `until`.
    pub fn run_until(&mut self, until: Minutes) -> Option<Completion> {
        loop {
            match self.events.peek() {
                Some(Reverse(ev)) if ev.time <= until => {}
                _ => {
                    self.now = self.now.max(until);
                    self.record(EventKind::PeriodBoundary, None, None);
                    return None;
                }
            }
            let Reverse(ev) = self.events.pop().expect("peeked");
            self.now = ev.time;
            match ev.payload {
                Payload::Release(lot) => {
                    self.record(EventKind::OrderReleased, Some(lot.order), Some(lot.routing[0]));
                    self.enqueue(lot);
                }
                Payload::Complete(id) => {
                    let machine = self.machines.get_mut(&id).expect("known machine");
                    let (mut lot, start, end) = machine.current.take().expect("busy machine");
                    machine.busy_completed += end - start;
                    self.record(EventKind::OperationComplete, Some(lot.order), Some(id));
                    self.try_start(id);
                    lot.stage += 1;
                    if lot.stage < lot.routing.len() {
                        self.enqueue(lot);
                    } else {
                        return Some(Completion {
                            order: lot.order,
                            item: lot.item,
                            lotsize: lot.lotsize,
                            released_at: lot.released_at,
                            time: self.now,
                            work: lot.work,
                        });
                    }
                }
            }
        }
    }

    /// Lots released and not yet finished, including those whose release
    /// event is pending.
    pub fn lots_in_process(&self) -> Vec<&Lot> {
        let mut lots: Vec<&Lot> = self
            .machines
            .values()
            .flat_map(|m| m.queue.iter().chain(m.current.iter().map(|(l, _, _)| l)))
            .collect();
        lots.extend(self.events.iter().filter_map(|Reverse(e)| match &e.payload {
            Payload::Release(l) => Some(l),
            Payload::Complete(_) => None,
        }));
        lots
    }

    /// Pieces on the shop floor per item.
    pub fn pieces_in_process(&self) -> BTreeMap<ItemId, Pieces> {
        let mut out = BTreeMap::new();
        for lot in self.lots_in_process() {
            *out.entry(lot.item).or_insert(0) += lot.lotsize;
        }
        out
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

//! Stock ledgers, material withdrawal at release and all-or-nothing
//! customer fulfillment.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::error::{Error, Result};
use crate::mrp::{OrderId, ProductionOrder};
use crate::system::{ItemId, ProductionSystemConfig};
use crate::{Period, Pieces};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReleaseOutcome {
    Released,
    Blocked,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StockLedger {
    on_hand: BTreeMap<ItemId, Pieces>,
    initial: BTreeMap<ItemId, Pieces>,
    receipts: BTreeMap<ItemId, Pieces>,
    withdrawals: BTreeMap<ItemId, Pieces>,
    /// Issued product orders waiting for components, in issue order.
    blocked: VecDeque<(OrderId, Vec<ItemId>)>,
}

impl StockLedger {
    pub fn new(system: &ProductionSystemConfig) -> Self {
        let zeros: BTreeMap<_, _> = system.items.iter().map(|i| (i.id, 0)).collect();
        Self {
            on_hand: zeros.clone(),
            initial: zeros.clone(),
            receipts: zeros.clone(),
            withdrawals: zeros,
            blocked: VecDeque::new(),
        }
    }

    pub fn with_stock(mut self, item: ItemId, pieces: Pieces) -> Self {
        assert!(pieces >= 0);
        self.on_hand.insert(item, pieces);
        self.initial.insert(item, pieces);
        self
    }

    pub fn on_hand(&self, item: ItemId) -> Pieces {
        self.on_hand.get(&item).copied().unwrap_or(0)
    }

    pub fn blocked(&self) -> impl Iterator<Item = OrderId> + '_ {
        self.blocked.iter().map(|(id, _)| *id)
    }

    pub fn receipts(&self, item: ItemId) -> Pieces {
        self.receipts.get(&item).copied().unwrap_or(0)
    }

    pub fn withdrawals(&self, item: ItemId) -> Pieces {
        self.withdrawals.get(&item).copied().unwrap_or(0)
    }

    fn withdraw(&mut self, item: ItemId, pieces: Pieces) {
        let stock = self.on_hand.entry(item).or_insert(0);
        debug_assert!(*stock >= pieces);
        *stock -= pieces;
        *self.withdrawals.entry(item).or_insert(0) += pieces;
    }

    fn requirements(order: &ProductionOrder, system: &ProductionSystemConfig) -> Result<Vec<(ItemId, Pieces)>> {
        Ok(system
            .item(order.item)?
            .bom
            .iter()
            .map(|l| (l.component, l.quantity * order.lotsize))
            .collect())
    }

    fn try_withdraw(&mut self, order: &ProductionOrder, system: &ProductionSystemConfig) -> Result<ReleaseOutcome> {
        let needs = Self::requirements(order, system)?;
        if needs.iter().all(|&(c, q)| self.on_hand(c) >= q) {
            for (c, q) in needs {
                self.withdraw(c, q);
            }
            Ok(ReleaseOutcome::Released)
        } else {
            Ok(ReleaseOutcome::Blocked)
        }
    }

    /// Withdraws all components of `order` atomically, or queues the order
    /// as blocked. Orders without a bill of materials always release.
    pub fn try_release(&mut self, order: &ProductionOrder, system: &ProductionSystemConfig) -> Result<ReleaseOutcome> {
        let comps: Vec<ItemId> = Self::requirements(order, system)?.into_iter().map(|(c, _)| c).collect();
        // No overtaking an earlier blocked order that waits for the same component.
        let waits = self
            .blocked
            .iter()
            .any(|(_, b)| b.iter().any(|c| comps.contains(c)));
        let outcome = if waits {
            ReleaseOutcome::Blocked
        } else {
            self.try_withdraw(order, system)?
        };
        if outcome == ReleaseOutcome::Blocked {
            self.blocked.push_back((order.id, comps));
        }
        Ok(outcome)
    }

    /// Re-attempts blocked releases in issue order. An order is only tried
    /// if no earlier blocked order waits for one of its components.
    pub fn retry_blocked(&mut self, orders: &[ProductionOrder], system: &ProductionSystemConfig) -> Result<Vec<OrderId>> {
        let mut starved: BTreeSet<ItemId> = BTreeSet::new();
        let mut still = VecDeque::new();
        let mut released = Vec::new();
        let queue = std::mem::take(&mut self.blocked);
        for (id, comps) in queue {
            let order = &orders[id];
            let outcome = if comps.iter().any(|c| starved.contains(c)) {
                ReleaseOutcome::Blocked
            } else {
                self.try_withdraw(order, system)?
            };
            match outcome {
                ReleaseOutcome::Released => released.push(id),
                ReleaseOutcome::Blocked => {
                    starved.extend(comps.iter().copied());
                    still.push_back((id, comps));
                }
            }
        }
        self.blocked = still;
        Ok(released)
    }

    /// Books a finished lot into stock.
    pub fn receive(&mut self, item: ItemId, pieces: Pieces) {
        debug_assert!(pieces > 0);
        *self.on_hand.entry(item).or_insert(0) += pieces;
        *self.receipts.entry(item).or_insert(0) += pieces;
    }

    /// `initial + receipts - withdrawals == on_hand` and `on_hand >= 0` for
    /// every item.
    pub fn check_conservation(&self) -> Result<()> {
        for (&item, &stock) in &self.on_hand {
            let expected = self.initial.get(&item).copied().unwrap_or(0) + self.receipts(item)
                - self.withdrawals(item);
            if stock != expected || stock < 0 {
                return Err(Error::Conservation(format!(
                    "item {item}: on hand {stock}, expected {expected}"
                )));
            }
        }
        Ok(())
    }
}

/// A firm customer order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CustomerDemand {
    pub product: ItemId,
    pub due_period: Period,
    pub quantity: Pieces,
    pub fulfilled_period: Option<Period>,
}

impl CustomerDemand {
    pub fn new(product: ItemId, due_period: Period, quantity: Pieces) -> Self {
        Self {
            product,
            due_period,
            quantity,
            fulfilled_period: None,
        }
    }

    pub fn is_open(&self) -> bool {
        self.fulfilled_period.is_none()
    }

    pub fn on_time(&self) -> bool {
        self.fulfilled_period == Some(self.due_period)
    }
}

/// Serves open demands due up to `period`, oldest first per product. A
/// demand ships only in full; the first demand that cannot be covered
/// holds back all later demands of that product. Returns the indices of
/// the demands shipped.
pub fn fulfill(demands: &mut [CustomerDemand], ledger: &mut StockLedger, period: Period) -> Vec<usize> {
    let mut order: Vec<usize> = (0..demands.len())
        .filter(|&i| demands[i].is_open() && demands[i].due_period <= period)
        .collect();
    order.sort_by_key(|&i| (demands[i].due_period, i));
    let mut held: BTreeSet<ItemId> = BTreeSet::new();
    let mut shipped = Vec::new();
    for i in order {
        let d = demands[i];
        if held.contains(&d.product) {
            continue;
        }
        if ledger.on_hand(d.product) >= d.quantity {
            ledger.withdraw(d.product, d.quantity);
            demands[i].fulfilled_period = Some(period);
            shipped.push(i);
        } else {
            held.insert(d.product);
        }
    }
    shipped
}

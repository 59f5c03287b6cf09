//! Static description of the production system: items, bill of materials,
//! routings, machines, cost rates and the periodic demand pattern.
//!
//! All times are minutes; one period is one day of 1440 minutes.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{Minutes, Period, Pieces, MINUTES_PER_PERIOD};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ItemId(pub u32);

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MachineId(pub u32);

impl fmt::Display for MachineId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ItemKind {
    FinalProduct,
    Component,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BomLine {
    pub component: ItemId,
    /// Component pieces consumed per parent piece.
    pub quantity: Pieces,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub id: ItemId,
    pub kind: ItemKind,
    /// Minutes per piece on every machine of the routing.
    pub processing_time: Minutes,
    pub routing: Vec<MachineId>,
    pub bom: Vec<BomLine>,
    /// Expected demand per due date; zero for components.
    pub expected_order_amount: Pieces,
}

impl Item {
    pub fn is_final_product(&self) -> bool {
        self.kind == ItemKind::FinalProduct
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Machine {
    pub id: MachineId,
    /// Available minutes per period.
    pub capacity: Minutes,
    /// Mean setup time per lot.
    pub setup_time_mean: Minutes,
    /// Coefficient of variation of the lognormal setup time.
    pub setup_cv: f64,
}

/// Cost per piece and period.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostRates {
    pub wip: f64,
    pub fgi: f64,
    pub backorder: f64,
}

impl Default for CostRates {
    fn default() -> Self {
        Self {
            wip: 0.5,
            fgi: 1.0,
            backorder: 19.0,
        }
    }
}

impl CostRates {
    /// Newsvendor-style target service level `1 - h / (h + b)`.
    pub fn target_service_level(&self) -> f64 {
        1.0 - self.fgi / (self.fgi + self.backorder)
    }
}

/// Periodic due dates: each final product is due once per `interval`
/// periods, in the residue class given by its offset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemandPattern {
    pub interval: Period,
    pub offsets: BTreeMap<ItemId, Period>,
    /// No due date at or before this period.
    pub first_demand_delay: Period,
}

impl DemandPattern {
    pub fn is_due(&self, product: ItemId, period: Period) -> bool {
        match self.offsets.get(&product) {
            Some(&offset) => {
                period > self.first_demand_delay
                    && (period - offset).rem_euclid(self.interval) == 0
            }
            None => false,
        }
    }

    /// Smallest due period strictly after the initial delay.
    pub fn first_due(&self, product: ItemId) -> Option<Period> {
        let offset = *self.offsets.get(&product)?;
        let start = self.first_demand_delay + 1;
        let shift = (offset - start).rem_euclid(self.interval);
        Some(start + shift)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UtilizationLevel {
    Low,
    Medium,
    High,
}

impl UtilizationLevel {
    pub const ALL: [UtilizationLevel; 3] = [Self::Low, Self::Medium, Self::High];

    /// Mean setup minutes per lot on the final-product machines.
    pub fn product_setup_mean(self) -> Minutes {
        match self {
            Self::Low => 216.0,
            Self::Medium => 288.0,
            Self::High => 331.2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Low => "low",
            Self::Medium => "medium",
            Self::High => "high",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "low" => Some(Self::Low),
            "medium" => Some(Self::Medium),
            "high" => Some(Self::High),
            _ => None,
        }
    }
}

impl fmt::Display for UtilizationLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

pub const PRODUCT_PROCESSING_TIME: Minutes = 1.35;
pub const COMPONENT_PROCESSING_TIME: Minutes = 0.68;
pub const COMPONENT_SETUP_MEAN: Minutes = 94.0;
pub const SETUP_CV: f64 = 0.2;
pub const EXPECTED_ORDER_AMOUNT: Pieces = 800;

/// How the two components reach the component machines.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComponentLayout {
    /// Both components run M201 then M202; one component piece per product
    /// piece.
    #[default]
    Shared,
    /// Component 20 on M201, component 21 on M202; two component pieces per
    /// product piece.
    Dedicated,
}

impl ComponentLayout {
    pub fn bom_quantity(self) -> Pieces {
        match self {
            Self::Shared => 1,
            Self::Dedicated => 2,
        }
    }

    pub fn routing(self, component: ItemId) -> Vec<MachineId> {
        match (self, component.0) {
            (Self::Shared, _) => vec![MachineId(201), MachineId(202)],
            (Self::Dedicated, 20) => vec![MachineId(201)],
            (Self::Dedicated, _) => vec![MachineId(202)],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductionSystemConfig {
    pub utilization: UtilizationLevel,
    pub items: Vec<Item>,
    pub machines: Vec<Machine>,
    pub costs: CostRates,
    pub demand: DemandPattern,
}

/// The eight-product, two-component job shop.
///
/// Products 10-13 run M102 then M101 and consume component 20; products
/// 14-17 run M112 then M111 and consume component 21. Component routing
/// and bill of materials follow [`ComponentLayout::Shared`].
pub fn build_default_system(level: UtilizationLevel) -> ProductionSystemConfig {
    build_system(level, ComponentLayout::default())
}

pub fn build_system(level: UtilizationLevel, layout: ComponentLayout) -> ProductionSystemConfig {
    let mut items = Vec::new();
    let mut offsets = BTreeMap::new();
    for (n, id) in (10..=17).enumerate() {
        let (routing, component) = if id <= 13 {
            (vec![MachineId(102), MachineId(101)], ItemId(20))
        } else {
            (vec![MachineId(112), MachineId(111)], ItemId(21))
        };
        items.push(Item {
            id: ItemId(id),
            kind: ItemKind::FinalProduct,
            processing_time: PRODUCT_PROCESSING_TIME,
            routing,
            bom: vec![BomLine {
                component,
                quantity: layout.bom_quantity(),
            }],
            expected_order_amount: EXPECTED_ORDER_AMOUNT,
        });
        offsets.insert(ItemId(id), (n % 4) as Period + 1);
    }
    for id in [20, 21] {
        items.push(Item {
            id: ItemId(id),
            kind: ItemKind::Component,
            processing_time: COMPONENT_PROCESSING_TIME,
            routing: layout.routing(ItemId(id)),
            bom: Vec::new(),
            expected_order_amount: 0,
        });
    }

    let product_setup = level.product_setup_mean();
    let machines = [101, 102, 111, 112, 201, 202]
        .into_iter()
        .map(|id| Machine {
            id: MachineId(id),
            capacity: MINUTES_PER_PERIOD,
            setup_time_mean: if id < 200 {
                product_setup
            } else {
                COMPONENT_SETUP_MEAN
            },
            setup_cv: SETUP_CV,
        })
        .collect();

    ProductionSystemConfig {
        utilization: level,
        items,
        machines,
        costs: CostRates::default(),
        demand: DemandPattern {
            interval: 4,
            offsets,
            first_demand_delay: 12,
        },
    }
}

impl ProductionSystemConfig {
    pub fn item(&self, id: ItemId) -> Result<&Item> {
        self.items
            .iter()
            .find(|i| i.id == id)
            .ok_or(Error::UnknownItem(id))
    }

    pub fn machine(&self, id: MachineId) -> Result<&Machine> {
        self.machines
            .iter()
            .find(|m| m.id == id)
            .ok_or(Error::UnknownMachine(id))
    }

    pub fn final_products(&self) -> impl Iterator<Item = &Item> {
        self.items.iter().filter(|i| i.is_final_product())
    }

    pub fn components(&self) -> impl Iterator<Item = &Item> {
        self.items.iter().filter(|i| !i.is_final_product())
    }

    /// Expected pieces per period a machine has to process, derived from
    /// the demand pattern and the bill of materials.
    pub fn expected_pieces_per_period(&self, machine: MachineId) -> Result<f64> {
        self.machine(machine)?;
        let interval = self.demand.interval as f64;
        let mut rate: BTreeMap<ItemId, f64> = BTreeMap::new();
        for p in self.final_products() {
            *rate.entry(p.id).or_default() += p.expected_order_amount as f64 / interval;
            for line in &p.bom {
                *rate.entry(line.component).or_default() +=
                    line.quantity as f64 * p.expected_order_amount as f64 / interval;
            }
        }
        Ok(self
            .items
            .iter()
            .filter(|i| i.routing.contains(&machine))
            .map(|i| rate.get(&i.id).copied().unwrap_or(0.0))
            .sum())
    }

    /// Processing minutes per piece on `machine`. Items sharing a machine
    /// are assumed to share a processing time.
    fn processing_time_on(&self, machine: MachineId) -> Result<Minutes> {
        self.items
            .iter()
            .find(|i| i.routing.contains(&machine))
            .map(|i| i.processing_time)
            .ok_or(Error::UnknownMachine(machine))
    }

    /// Planned utilization `(pieces * processing + lots * setup) / capacity`.
    pub fn planned_utilization(
        &self,
        machine: MachineId,
        lots_per_period: f64,
        pieces_per_period: f64,
    ) -> Result<f64> {
        let m = self.machine(machine)?;
        let proc = self.processing_time_on(machine)?;
        Ok((pieces_per_period * proc + lots_per_period * m.setup_time_mean) / m.capacity)
    }

    pub fn validate(&self) -> Result<()> {
        if self.demand.interval < 1 {
            return Err(Error::Config("demand interval must be >= 1".into()));
        }
        for m in &self.machines {
            if !(m.capacity > 0.0) {
                return Err(Error::Config(format!("machine M{} capacity must be > 0", m.id)));
            }
            if !(m.setup_cv >= 0.0) || !(m.setup_time_mean > 0.0) {
                return Err(Error::Config(format!(
                    "machine M{} needs setup mean > 0 and cv >= 0",
                    m.id
                )));
            }
        }
        for item in &self.items {
            if !(item.processing_time > 0.0) {
                return Err(Error::Config(format!("item {} processing time must be > 0", item.id)));
            }
            for m in &item.routing {
                self.machine(*m)?;
            }
            match item.kind {
                ItemKind::FinalProduct => {
                    if item.routing.len() != 2 {
                        return Err(Error::Config(format!(
                            "final product {} must have a two-stage routing",
                            item.id
                        )));
                    }
                    if !self.demand.offsets.contains_key(&item.id) {
                        return Err(Error::Config(format!("product {} has no demand offset", item.id)));
                    }
                    for line in &item.bom {
                        let c = self.item(line.component)?;
                        if c.kind != ItemKind::Component || line.quantity <= 0 {
                            return Err(Error::Config(format!(
                                "bom of {} must reference components with positive quantity",
                                item.id
                            )));
                        }
                    }
                }
                ItemKind::Component => {
                    if item.routing.is_empty() || !item.bom.is_empty() {
                        return Err(Error::Config(format!(
                            "component {} needs a routing and an empty bom",
                            item.id
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Planned utilization of every machine, the way the load scenarios are
    /// calibrated: product machines at one lot per period (FOP 1) plus the
    /// setup-free baseline, component machines at the two component lot
    /// sizes.
    pub fn utilization_table(&self, component_lots: &[Pieces]) -> Result<Vec<UtilizationRow>> {
        let mut rows = Vec::new();
        for m in &self.machines {
            let pieces = self.expected_pieces_per_period(m.id)?;
            let is_product_machine = self
                .items
                .iter()
                .any(|i| i.is_final_product() && i.routing.contains(&m.id));
            if is_product_machine {
                rows.push(UtilizationRow {
                    machine: m.id,
                    scenario: "baseline".into(),
                    lots_per_period: 0.0,
                    pieces_per_period: pieces,
                    setup_mean: m.setup_time_mean,
                    utilization: self.planned_utilization(m.id, 0.0, pieces)?,
                });
                rows.push(UtilizationRow {
                    machine: m.id,
                    scenario: self.utilization.label().into(),
                    lots_per_period: 1.0,
                    pieces_per_period: pieces,
                    setup_mean: m.setup_time_mean,
                    utilization: self.planned_utilization(m.id, 1.0, pieces)?,
                });
            } else {
                for &q in component_lots {
                    let lots = (pieces / q as f64).ceil();
                    rows.push(UtilizationRow {
                        machine: m.id,
                        scenario: format!("FOQ{q}"),
                        lots_per_period: lots,
                        pieces_per_period: pieces,
                        setup_mean: m.setup_time_mean,
                        utilization: self.planned_utilization(m.id, lots, pieces)?,
                    });
                }
            }
        }
        Ok(rows)
    }

    pub fn with_overrides(mut self, o: &SystemOverrides) -> Result<Self> {
        for item in &mut self.items {
            if let Some(layout) = o.component_layout {
                match item.kind {
                    ItemKind::FinalProduct => {
                        for line in &mut item.bom {
                            line.quantity = layout.bom_quantity();
                        }
                    }
                    ItemKind::Component => item.routing = layout.routing(item.id),
                }
            }
            match item.kind {
                ItemKind::FinalProduct => {
                    if let Some(v) = o.product_processing_time {
                        item.processing_time = v;
                    }
                    if let Some(v) = o.expected_order_amount {
                        item.expected_order_amount = v;
                    }
                    if let Some(q) = o.bom_quantity {
                        for line in &mut item.bom {
                            line.quantity = q;
                        }
                    }
                }
                ItemKind::Component => {
                    if let Some(v) = o.component_processing_time {
                        item.processing_time = v;
                    }
                }
            }
        }
        for m in &mut self.machines {
            if let Some(c) = o.capacity {
                m.capacity = c;
            }
            if let Some(cv) = o.setup_cv {
                m.setup_cv = cv;
            }
            let product_machine = m.id.0 < 200;
            match (product_machine, o.product_setup_mean, o.component_setup_mean) {
                (true, Some(v), _) => m.setup_time_mean = v,
                (false, _, Some(v)) => m.setup_time_mean = v,
                _ => {}
            }
        }
        if let Some(c) = &o.costs {
            self.costs.wip = c.wip.unwrap_or(self.costs.wip);
            self.costs.fgi = c.fgi.unwrap_or(self.costs.fgi);
            self.costs.backorder = c.backorder.unwrap_or(self.costs.backorder);
        }
        if let Some(d) = &o.demand {
            self.demand.interval = d.interval.unwrap_or(self.demand.interval);
            self.demand.first_demand_delay =
                d.first_demand_delay.unwrap_or(self.demand.first_demand_delay);
        }
        self.validate()?;
        Ok(self)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UtilizationRow {
    pub machine: MachineId,
    pub scenario: String,
    pub lots_per_period: f64,
    pub pieces_per_period: f64,
    pub setup_mean: Minutes,
    pub utilization: f64,
}

/// Optional overrides read from a TOML configuration file.
///
/// Every key is optional; absent keys keep the built-in value. Unknown keys
/// are rejected.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemOverrides {
    pub product_processing_time: Option<Minutes>,
    pub component_processing_time: Option<Minutes>,
    pub capacity: Option<Minutes>,
    pub setup_cv: Option<f64>,
    /// Replaces the utilization level's product setup mean.
    pub product_setup_mean: Option<Minutes>,
    pub component_setup_mean: Option<Minutes>,
    pub component_layout: Option<ComponentLayout>,
    /// Applied after `component_layout`.
    pub bom_quantity: Option<Pieces>,
    pub expected_order_amount: Option<Pieces>,
    pub costs: Option<CostOverrides>,
    pub demand: Option<DemandOverrides>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostOverrides {
    pub wip: Option<f64>,
    pub fgi: Option<f64>,
    pub backorder: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandOverrides {
    pub interval: Option<Period>,
    pub first_demand_delay: Option<Period>,
}

impl SystemOverrides {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::controller::{ScaleAction, ScaleDirection, VnfKind};
use crate::discovery::{AnqpDataSet, AnqpValue, Wap};
use crate::engine::{Counters, Engine, Event, Handler, LinkState, NodeId, Payload, SimTime};
use crate::epc::{
    CdrLog, ChargingRecord, Hss, Imsi, PasswordCredential, Pcrf, Pgw, Sgw, SubscriberProfile,
};
use crate::ids::{FlowId, WapId};
use crate::proto::{Msg, Tick};
use crate::scenario::{Directive, FlowSpec, Scenario, SubscriberSpec, WapSpec};

use super::controller_node::PolicyRequest;
use super::endpoint::FlowState;
use super::ue::FlowRequest;
use super::{
    Address, Audit, Config, ConfigError, ControllerNode, Ctx, Directory, Endpoint, Lgw, Out,
    Outbox, UeNode, VnfFunc, VnfNode, WapInfo, WapNode, CONTROLLER, FIRST_VNF, INTERNET,
    LGW_BASE, SWITCH, UE_BASE, WAP_BASE, WORLD,
};

#[derive(Debug, Clone)]
pub enum Node {
    Switch,
    Server(Endpoint),
    Controller(ControllerNode),
    Vnf(VnfNode),
    Wap(WapNode),
    Lgw(Lgw),
    Ue(UeNode),
}

/// Everything but the engine, so that it can be the engine's handler.
#[derive(Debug)]
struct Net {
    config: Config,
    dir: Directory,
    nodes: BTreeMap<NodeId, Node>,
    pools: BTreeMap<VnfKind, Vec<NodeId>>,
    round_robin: BTreeMap<VnfKind, usize>,
    mme_of: BTreeMap<NodeId, NodeId>,
    names: BTreeMap<String, NodeId>,
    flows: BTreeMap<String, (FlowId, NodeId)>,
    subscribers: BTreeMap<Imsi, SubscriberProfile>,
    directives: Vec<Directive>,
    audits: Vec<(SimTime, Audit)>,
    cdrs: CdrLog,
    next_vnf: u32,
    next_pgw_block: u32,
    controller_removed: bool,
}

/// One simulated network driven by one scenario.
pub struct World {
    engine: Engine<Msg>,
    net: Net,
    end: SimTime,
    finished: bool,
}

impl World {
    /// Builds the core network and queues the scenario's directives. An
    /// explicit `seed` overrides the scenario's.
    pub fn new(scenario: &Scenario, seed: Option<u64>) -> Result<Self, ConfigError> {
        let config = scenario.config()?;
        let seed = seed.or(config.seed).unwrap_or(0);
        let mut engine = Engine::new(seed);
        let end = scenario
            .end()
            .or_else(|| scenario.directives.last().map(|d| d.at))
            .unwrap_or(SimTime::ZERO);
        let mut net = Net {
            config,
            dir: Directory::default(),
            nodes: BTreeMap::new(),
            pools: BTreeMap::new(),
            round_robin: BTreeMap::new(),
            mme_of: BTreeMap::new(),
            names: BTreeMap::new(),
            flows: BTreeMap::new(),
            subscribers: BTreeMap::new(),
            directives: scenario.directives.iter().map(|d| d.directive.clone()).collect(),
            audits: Vec::new(),
            cdrs: CdrLog::default(),
            next_vnf: FIRST_VNF.0,
            next_pgw_block: 0,
            controller_removed: false,
        };
        net.build(&mut engine);
        for (i, d) in scenario.directives.iter().enumerate() {
            engine
                .schedule(WORLD, Msg::Directive(i), d.at)
                .expect("directive times are never negative");
        }
        Ok(Self {
            engine,
            net,
            end,
            finished: false,
        })
    }

    /// Keeps every trace line, not just the digest.
    pub fn keep_trace(&mut self, keep: bool) {
        self.engine.trace_mut().keep_lines(keep);
    }

    pub fn end_time(&self) -> SimTime {
        self.end
    }

    pub fn set_end_time(&mut self, end: SimTime) {
        self.end = end;
    }

    /// Runs to the end time and closes every open charging record.
    pub fn run(&mut self) -> RunSummary {
        if !self.finished {
            self.engine.run_until(self.end, &mut self.net);
            self.net.close_all(&mut self.engine, self.end);
            self.finished = true;
        }
        self.summary()
    }

    /// Advances to `until` without finishing the run.
    pub fn run_until(&mut self, until: SimTime) {
        self.engine.run_until(until, &mut self.net);
    }

    pub fn now(&self) -> SimTime {
        self.engine.now()
    }

    pub fn engine(&self) -> &Engine<Msg> {
        &self.engine
    }

    pub fn config(&self) -> &Config {
        &self.net.config
    }

    pub fn audits(&self) -> &[(SimTime, Audit)] {
        &self.net.audits
    }

    pub fn cdrs(&self) -> &CdrLog {
        &self.net.cdrs
    }

    pub fn trace_lines(&self) -> &[String] {
        self.engine.trace().lines()
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.net.nodes.get(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, &Node)> {
        self.net.nodes.iter().map(|(k, v)| (*k, v))
    }

    /// Node id behind a scenario name.
    pub fn lookup(&self, name: &str) -> Option<NodeId> {
        self.net.names.get(name).copied()
    }

    pub fn name_of(&self, id: NodeId) -> String {
        self.net.name_of(id)
    }

    pub fn flow_id(&self, name: &str) -> Option<FlowId> {
        self.net.flows.get(name).map(|f| f.0)
    }

    pub fn ue(&self, name: &str) -> Option<&UeNode> {
        match self.net.nodes.get(self.net.names.get(name)?)? {
            Node::Ue(u) => Some(u),
            _ => None,
        }
    }

    pub fn wap(&self, name: &str) -> Option<&WapNode> {
        match self.net.nodes.get(self.net.names.get(name)?)? {
            Node::Wap(w) => Some(w),
            _ => None,
        }
    }

    pub fn server(&self) -> &Endpoint {
        match &self.net.nodes[&INTERNET] {
            Node::Server(s) => s,
            _ => unreachable!("the Internet node is the server"),
        }
    }

    /// Live instances of a network function.
    pub fn pool(&self, kind: VnfKind) -> &[NodeId] {
        self.net.pools.get(&kind).map_or(&[], Vec::as_slice)
    }

    /// The MME context of a terminal.
    pub fn context(&self, ue: NodeId) -> Option<&crate::epc::UeContext> {
        let mme = self.net.mme_of.get(&ue)?;
        match self.net.nodes.get(mme)? {
            Node::Vnf(VnfNode {
                func: VnfFunc::Mme(m),
                ..
            }) => m.context(ue),
            _ => None,
        }
    }

    /// `(serving gateway, PDN gateway)` anchoring a terminal.
    pub fn anchor(&self, ue: NodeId) -> Option<(NodeId, NodeId)> {
        let mme = self.net.mme_of.get(&ue)?;
        match self.net.nodes.get(mme)? {
            Node::Vnf(VnfNode {
                func: VnfFunc::Mme(m),
                ..
            }) => m.anchor(ue),
            _ => None,
        }
    }

    /// Every serving- and PDN-gateway node, colocated ones included.
    pub fn gateways(&self) -> (BTreeSet<NodeId>, BTreeSet<NodeId>) {
        let mut sgws = BTreeSet::new();
        let mut pgws = BTreeSet::new();
        for (id, n) in &self.net.nodes {
            if let Node::Vnf(v) = n {
                match v.func {
                    VnfFunc::Sgw(_) => {
                        sgws.insert(*id);
                    }
                    VnfFunc::Pgw(_) => {
                        pgws.insert(*id);
                    }
                    VnfFunc::Gw(..) => {
                        sgws.insert(*id);
                        pgws.insert(*id);
                    }
                    _ => {}
                }
            }
        }
        (sgws, pgws)
    }

    /// Payload bytes every PDN gateway forwarded, by subscriber.
    pub fn pgw_forwarded(&self) -> BTreeMap<Imsi, u64> {
        let mut total: BTreeMap<Imsi, u64> = BTreeMap::new();
        for n in self.net.nodes.values() {
            let pgw = match n {
                Node::Vnf(VnfNode {
                    func: VnfFunc::Pgw(p) | VnfFunc::Gw(_, p),
                    ..
                }) => p,
                _ => continue,
            };
            for (imsi, b) in pgw.charging.forwarded_by_imsi() {
                *total.entry(imsi.clone()).or_default() += b;
            }
        }
        total
    }

    /// Payload bytes every local gateway forwarded, by subscriber.
    pub fn lgw_forwarded(&self) -> BTreeMap<Imsi, u64> {
        let mut total: BTreeMap<Imsi, u64> = BTreeMap::new();
        for n in self.net.nodes.values() {
            if let Node::Lgw(l) = n {
                for (imsi, b) in l.charging.forwarded_by_imsi() {
                    *total.entry(imsi.clone()).or_default() += b;
                }
            }
        }
        total
    }

    pub fn errors(&self) -> Vec<String> {
        self.net
            .audits
            .iter()
            .filter_map(|(_, a)| match a {
                Audit::Error(e) => Some(e.clone()),
                _ => None,
            })
            .collect()
    }

    pub fn summary(&self) -> RunSummary {
        let net = &self.net;
        let mut flows = Vec::new();
        for (name, &(id, ue)) in &net.flows {
            let Some(Node::Ue(u)) = net.nodes.get(&ue) else { continue };
            let Some(f) = u.flows.get(&id) else { continue };
            let server = self.server().flows.get(&id);
            flows.push(FlowSummary {
                name: name.clone(),
                ue: net.name_of(ue),
                class: f.descriptor.class.to_string(),
                route: f.route.to_string(),
                interface: net.name_of(f.interface.node()),
                multipath: f.multipath(),
                state: server.map_or("rejected", |s| match s.state {
                    FlowState::Running => "running",
                    FlowState::Finished => "finished",
                    FlowState::Stopped => "stopped",
                    FlowState::Stalled => "stalled",
                }),
                sent_bytes: server.map_or(0, |s| s.conn.sent_bytes()),
                delivered_bytes: f.reassembly.delivered(),
                duplicate_bytes: f.reassembly.duplicate_bytes(),
                subflows: f
                    .subflows
                    .iter()
                    .map(|&(sf, w)| SubflowSummary {
                        subflow: sf.0,
                        interface: net.name_of(w.node()),
                        received_bytes: f.received.get(&sf).copied().unwrap_or(0),
                        carried_bytes: server
                            .and_then(|s| s.conn.subflow(sf))
                            .map_or(0, |s| s.bytes_carried),
                    })
                    .collect(),
            });
        }
        let waps = net
            .nodes
            .iter()
            .filter_map(|(id, n)| match n {
                Node::Wap(w) => Some(WapSummary {
                    name: net.name_of(*id),
                    access: w.wap.access_type.to_string(),
                    capacity_bps: w.wap.effective_capacity_bps(),
                    peak_load_bps: w.peak_load_bps(),
                    sent_bits: w.sent_bits(),
                    forwarded_packets: w.forwarded(),
                    attached: w.attached().count() as u32,
                    policy_version: w.policy_version(),
                }),
                _ => None,
            })
            .collect();
        let mut events = EventCounts::default();
        for (_, a) in &net.audits {
            match a {
                Audit::AuthSucceeded { .. } => events.auth_succeeded += 1,
                Audit::AuthFailed { .. } => events.auth_failed += 1,
                Audit::Attached { .. } => events.attached += 1,
                Audit::AttachRejected { .. } => events.attach_rejected += 1,
                Audit::HandoverStarted { .. } => events.handover_started += 1,
                Audit::HandoverCompleted { .. } => events.handover_completed += 1,
                Audit::HandoverRejected { .. } => events.handover_rejected += 1,
                Audit::PathFailed { .. } => events.path_failures += 1,
                Audit::Scaled { .. } => events.scale_actions += 1,
                Audit::Southbound { result, .. } => {
                    if result.is_ok() {
                        events.southbound_acked += 1
                    } else {
                        events.southbound_failed += 1
                    }
                }
                _ => {}
            }
        }
        let mut cdr = CdrTotals::default();
        for r in net.cdrs.records() {
            cdr.records += 1;
            cdr.bytes_up += r.bytes_up;
            cdr.bytes_down += r.bytes_down;
            match r.breakout {
                crate::epc::Breakout::Core => cdr.core_bytes += r.total_bytes(),
                crate::epc::Breakout::Local => cdr.local_bytes += r.total_bytes(),
            }
        }
        RunSummary {
            seed: self.engine.rng().seed(),
            end_us: self.end.as_micros(),
            clock_us: self.engine.now().as_micros(),
            trace_digest: self.engine.trace_digest(),
            trace_lines: self.engine.trace().len(),
            counters: self.engine.counters(),
            flows,
            waps,
            events,
            cdr,
            errors: self.errors(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SubflowSummary {
    pub subflow: u32,
    pub interface: String,
    pub received_bytes: u64,
    pub carried_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FlowSummary {
    pub name: String,
    pub ue: String,
    pub class: String,
    pub route: String,
    pub interface: String,
    pub multipath: bool,
    pub state: &'static str,
    /// Distinct bytes the server handed out.
    pub sent_bytes: u64,
    /// Bytes the terminal delivered in order to the application.
    pub delivered_bytes: u64,
    pub duplicate_bytes: u64,
    pub subflows: Vec<SubflowSummary>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WapSummary {
    pub name: String,
    pub access: String,
    pub capacity_bps: u64,
    pub peak_load_bps: u64,
    pub sent_bits: u64,
    pub forwarded_packets: u64,
    pub attached: u32,
    pub policy_version: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct EventCounts {
    pub auth_succeeded: u32,
    pub auth_failed: u32,
    pub attached: u32,
    pub attach_rejected: u32,
    pub handover_started: u32,
    pub handover_completed: u32,
    pub handover_rejected: u32,
    pub path_failures: u32,
    pub southbound_acked: u32,
    pub southbound_failed: u32,
    pub scale_actions: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CdrTotals {
    pub records: u64,
    pub bytes_up: u64,
    pub bytes_down: u64,
    pub core_bytes: u64,
    pub local_bytes: u64,
}

/// What a finished run reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub end_us: u64,
    pub clock_us: u64,
    pub trace_digest: String,
    pub trace_lines: u64,
    pub counters: Counters,
    pub flows: Vec<FlowSummary>,
    pub waps: Vec<WapSummary>,
    pub events: EventCounts,
    pub cdr: CdrTotals,
    pub errors: Vec<String>,
}

impl RunSummary {
    /// Clean completion: no directive or protocol error was recorded.
    pub fn ok(&self) -> bool {
        self.errors.is_empty()
    }
}

impl Handler<Msg> for Net {
    fn on_event(&mut self, engine: &mut Engine<Msg>, event: Event<Msg>) {
        let me = event.target;
        let (src, msg) = match event.payload {
            Payload::Timer(Msg::Directive(i)) if me == WORLD => return self.directive(engine, i),
            Payload::Timer(m) => (me, m),
            Payload::Message(env) => {
                let mut msg = env.msg;
                if let Msg::Data(pkt) = &mut msg {
                    if pkt.hops.is_empty() {
                        pkt.hops = env.path;
                    } else {
                        pkt.hops.extend_from_slice(&env.path[1..]);
                    }
                }
                (env.src, msg)
            }
        };
        let now = engine.now();
        let mut out = Outbox::default();
        let Net {
            config, dir, nodes, ..
        } = self;
        let Some(node) = nodes.get_mut(&me) else { return };
        let cx = Ctx {
            now,
            me,
            config,
            dir,
        };
        let depart = match node {
            Node::Switch => now,
            Node::Server(s) => {
                s.handle(&cx, src, msg, &mut out);
                now
            }
            Node::Controller(c) => {
                c.handle(&cx, src, msg, &mut out);
                now
            }
            Node::Vnf(v) => v.handle(&cx, src, msg, &mut out),
            Node::Wap(w) => {
                w.handle(&cx, src, msg, &mut out);
                now
            }
            Node::Lgw(l) => {
                l.handle(&cx, src, msg, &mut out);
                now
            }
            Node::Ue(u) => {
                u.handle(&cx, src, msg, &mut out);
                now
            }
        };
        self.apply(engine, me, depart, out);
    }
}

impl Net {
    fn build(&mut self, engine: &mut Engine<Msg>) {
        let c = &self.config;
        let (lat, cap) = (c.core_latency_us, c.core_capacity_bps);
        self.add(SWITCH, "switch", Node::Switch);
        self.add(INTERNET, "internet", Node::Server(Endpoint::default()));
        let instances = VnfKind::ALL.into_iter().map(|k| (k, 1)).collect();
        self.add(CONTROLLER, "controller", Node::Controller(ControllerNode::new(instances)));
        link(engine, CONTROLLER, SWITCH, lat, cap);
        for kind in [VnfKind::Hss, VnfKind::Pcrf, VnfKind::Mme, VnfKind::Sgw] {
            self.spawn(engine, kind);
        }
        if !self.config.colocate_gateways {
            self.spawn(engine, VnfKind::Pgw);
        }
        if let Some(every) = self.config.orchestrate_interval_us {
            let _ = engine.schedule(CONTROLLER, Msg::Tick(Tick::Orchestrate), SimTime::from_micros(every));
        }
    }

    fn add(&mut self, id: NodeId, name: &str, node: Node) {
        self.names.insert(name.to_string(), id);
        self.nodes.insert(id, node);
    }

    fn name_of(&self, id: NodeId) -> String {
        self.names
            .iter()
            .find(|(_, v)| **v == id)
            .map_or_else(|| id.to_string(), |(k, _)| k.clone())
    }

    /// Starts one more instance of `kind` and adds it to the pool.
    fn spawn(&mut self, engine: &mut Engine<Msg>, kind: VnfKind) -> NodeId {
        let id = NodeId(self.next_vnf);
        self.next_vnf += 1;
        let n = self.pools.get(&kind).map_or(0, Vec::len);
        let window = self.config.pcef_window_us;
        let mut pgw = || {
            let block = self.config.ip_pool.next_block(self.next_pgw_block);
            self.next_pgw_block += 1;
            Pgw::new(block, window)
        };
        let (func, name) = match kind {
            VnfKind::Hss => {
                let mut hss = Hss::new(engine.rng().stream(&format!("hss{n}")));
                for p in self.subscribers.values() {
                    let _ = hss.register(p.clone());
                }
                (VnfFunc::Hss(hss), format!("hss{n}"))
            }
            VnfKind::Pcrf => {
                let mut pcrf = Pcrf::default();
                for p in self.subscribers.values() {
                    pcrf.provision(p.imsi.clone(), p.qos_subscription.clone());
                }
                (VnfFunc::Pcrf(pcrf), format!("pcrf{n}"))
            }
            VnfKind::Mme => (VnfFunc::Mme(Default::default()), format!("mme{n}")),
            VnfKind::Sgw if self.config.colocate_gateways => {
                let mut sgw = Sgw::default();
                sgw.colocated_pgw = Some(id);
                (VnfFunc::Gw(sgw, pgw()), format!("gw{n}"))
            }
            VnfKind::Sgw => (VnfFunc::Sgw(Sgw::default()), format!("sgw{n}")),
            VnfKind::Pgw => (VnfFunc::Pgw(pgw()), format!("pgw{n}")),
        };
        let is_pgw = matches!(func, VnfFunc::Pgw(_) | VnfFunc::Gw(..));
        self.add(id, &name, Node::Vnf(VnfNode::new(kind, func)));
        link(engine, id, SWITCH, self.config.core_latency_us, self.config.core_capacity_bps);
        if is_pgw {
            link(
                engine,
                id,
                INTERNET,
                self.config.internet_latency_us,
                self.config.core_capacity_bps,
            );
            if let Some(every) = self.config.cdr_interval_us {
                let _ = engine.schedule(id, Msg::Tick(Tick::Charging), engine.now().after(every));
            }
        }
        let first_report = engine.now().after(self.config.report_interval_us);
        let _ = engine.schedule(id, Msg::Tick(Tick::Report), first_report);
        self.pools.entry(kind).or_default().push(id);
        id
    }

    fn resolve(&mut self, to: Address) -> Option<NodeId> {
        match to {
            Address::Node(n) => Some(n),
            Address::Service(kind) => {
                let pool = self.pools.get(&kind).filter(|p| !p.is_empty())?;
                let next = self.round_robin.entry(kind).or_default();
                let id = pool[*next % pool.len()];
                *next += 1;
                Some(id)
            }
            Address::Mme(ue) => match self.mme_of.get(&ue) {
                Some(m) => Some(*m),
                None => {
                    let m = self.resolve(Address::Service(VnfKind::Mme))?;
                    self.mme_of.insert(ue, m);
                    Some(m)
                }
            },
        }
    }

    fn audit(&mut self, engine: &mut Engine<Msg>, a: Audit) {
        engine.note(format!("audit {a:?}"));
        self.audits.push((engine.now(), a));
    }

    fn error(&mut self, engine: &mut Engine<Msg>, e: impl Into<String>) {
        self.audit(engine, Audit::Error(e.into()));
    }

    fn apply(&mut self, engine: &mut Engine<Msg>, me: NodeId, depart: SimTime, out: Outbox) {
        let now = engine.now();
        for item in out.items {
            match item {
                Out::Send { to, msg, depart: d } => {
                    let Some(dst) = self.resolve(to) else {
                        self.error(engine, format!("{}: no instance for {to:?}", self.name_of(me)));
                        continue;
                    };
                    let at = d.unwrap_or(depart).max(now);
                    let bits = msg.size_bits();
                    if let Err(e) = engine.send_at(me, dst, msg, bits, at) {
                        self.error(engine, e.to_string());
                    }
                }
                Out::Timer { at, tick } => {
                    let _ = engine.schedule(me, Msg::Tick(tick), at.max(now));
                }
                Out::Audit(a) => self.audit(engine, a),
                Out::Cdr(r) => self.cdr(engine, r),
                Out::Scale(a) => self.scale(engine, a),
            }
        }
    }

    fn cdr(&mut self, engine: &mut Engine<Msg>, r: ChargingRecord) {
        let id = self.cdrs.append(r);
        let line = self.cdrs.records().last().map(ChargingRecord::to_csv_line);
        engine.note(format!("cdr {id} {}", line.unwrap_or_default()));
    }

    fn scale(&mut self, engine: &mut Engine<Msg>, action: ScaleAction) {
        // Colocated gateways scale as serving gateways.
        let kind = match action.kind {
            VnfKind::Pgw if self.config.colocate_gateways => VnfKind::Sgw,
            k => k,
        };
        match action.direction {
            ScaleDirection::ScaleUp => {
                let instance = self.spawn(engine, kind);
                self.audit(engine, Audit::Scaled { action, instance });
            }
            ScaleDirection::ScaleDown => {
                let pool = self.pools.entry(kind).or_default();
                if pool.len() <= 1 {
                    return;
                }
                let instance = pool.pop().expect("more than one");
                // Retired instances stop taking new work but finish what
                // they hold: terminals already bound to them stay.
                if let Some(Node::Vnf(v)) = self.nodes.get_mut(&instance) {
                    v.retired = true;
                }
                self.audit(engine, Audit::Scaled { action, instance });
            }
        }
    }

    fn close_all(&mut self, engine: &mut Engine<Msg>, now: SimTime) {
        let mut records = Vec::new();
        for n in self.nodes.values_mut() {
            match n {
                Node::Vnf(VnfNode {
                    func: VnfFunc::Pgw(p) | VnfFunc::Gw(_, p),
                    ..
                }) => records.extend(p.charging.close_all(now)),
                Node::Lgw(l) => records.extend(l.charging.close_all(now)),
                _ => {}
            }
        }
        for r in records {
            self.cdr(engine, r);
        }
    }

    /// Runs `f` as node `id` and applies what it produced.
    fn act<T>(
        &mut self,
        engine: &mut Engine<Msg>,
        id: NodeId,
        f: impl FnOnce(&mut Node, &Ctx, &mut Outbox) -> T,
    ) -> T {
        let mut out = Outbox::default();
        let Net {
            config, dir, nodes, ..
        } = self;
        let cx = Ctx {
            now: engine.now(),
            me: id,
            config,
            dir,
        };
        let node = nodes.get_mut(&id).expect("resolved before acting");
        let r = f(node, &cx, &mut out);
        self.apply(engine, id, engine.now(), out);
        r
    }

    fn lookup(&self, name: &str) -> Result<NodeId, String> {
        self.names
            .get(name)
            .copied()
            .ok_or_else(|| format!("unknown entity `{name}`"))
    }

    fn ue_id(&self, name: &str) -> Result<NodeId, String> {
        let id = self.lookup(name)?;
        match self.nodes[&id] {
            Node::Ue(_) => Ok(id),
            _ => Err(format!("`{name}` is not a terminal")),
        }
    }

    fn wap_id(&self, name: &str) -> Result<WapId, String> {
        let id = self.lookup(name)?;
        match self.nodes[&id] {
            Node::Wap(_) => Ok(WapId::from(id)),
            _ => Err(format!("`{name}` is not an access point")),
        }
    }

    fn fresh_name(&self, name: &str) -> Result<(), String> {
        if self.names.contains_key(name) || self.flows.contains_key(name) {
            Err(format!("`{name}` is already declared"))
        } else {
            Ok(())
        }
    }

    fn directive(&mut self, engine: &mut Engine<Msg>, i: usize) {
        let d = self.directives[i].clone();
        if let Err(e) = self.execute(engine, d) {
            self.error(engine, e);
        }
    }

    fn execute(&mut self, engine: &mut Engine<Msg>, d: Directive) -> Result<(), String> {
        match d {
            Directive::AddWap(spec) => self.add_wap(engine, spec)?,
            Directive::AddSubscriber(spec) => self.add_subscriber(spec)?,
            Directive::AddUe { name, imsi } => {
                self.fresh_name(&name)?;
                let id = NodeId(UE_BASE + self.dir.ues.len() as u32);
                let profile = match self.subscribers.get(&imsi) {
                    Some(p) => p.clone(),
                    // A SIM the network never provisioned.
                    None => SubscriberProfile::new(imsi, Some(vec![0; 16]), None)
                        .expect("has a key"),
                };
                for (w, info) in &self.dir.waps {
                    let latency = radio_latency(&self.nodes, *w, info);
                    link(engine, id, w.node(), latency, self.config.radio_capacity_bps);
                }
                self.dir.ues.push(id);
                self.add(id, &name, Node::Ue(UeNode::new(profile)));
            }
            Directive::Attach { ue, via } => {
                let ue = self.ue_id(&ue)?;
                let via = via.map(|w| self.wap_id(&w)).transpose()?;
                self.act(engine, ue, |n, cx, out| {
                    if let Node::Ue(u) = n {
                        u.attach(cx, via, out)
                    }
                });
            }
            Directive::StartFlow(spec) => self.start_flow(engine, spec)?,
            Directive::BindFlow { flow, via } => {
                let &(id, ue) = self.flows.get(&flow).ok_or(format!("unknown flow `{flow}`"))?;
                let via = self.wap_id(&via)?;
                self.act(engine, ue, |n, cx, out| {
                    if let Node::Ue(u) = n {
                        u.bind_flow(cx, id, via, out)
                    }
                });
            }
            Directive::StopFlow { flow } => {
                let &(id, ue) = self.flows.get(&flow).ok_or(format!("unknown flow `{flow}`"))?;
                self.act(engine, ue, |n, cx, out| {
                    if let Node::Ue(u) = n {
                        u.stop_flow(cx, id, out)
                    }
                });
            }
            Directive::Handover { ue, to } => {
                let ue = self.ue_id(&ue)?;
                let to = self.wap_id(&to)?;
                self.act(engine, ue, |n, cx, out| {
                    if let Node::Ue(u) = n {
                        u.handover(cx, to, out)
                    }
                });
            }
            Directive::FailLink { a, b } => self.set_link(engine, &a, &b, LinkState::Down)?,
            Directive::RestoreLink { a, b } => self.set_link(engine, &a, &b, LinkState::Up)?,
            Directive::FailWap { wap } => {
                let w = self.wap_id(&wap)?.node();
                let peers: Vec<NodeId> = engine.topology().neighbours(w).collect();
                for p in peers {
                    engine
                        .topology_mut()
                        .set_state(w, p, LinkState::Down)
                        .map_err(|e| e.to_string())?;
                }
                engine.note(format!("fail-wap {wap}"));
            }
            Directive::PushPolicy(p) => {
                let wap = self.wap_id(&p.wap)?;
                self.controller_up()?;
                let (phy, params): (BTreeMap<_, _>, BTreeMap<_, _>) =
                    p.params.into_iter().partition(|(k, _)| k.starts_with("phy."));
                let req = PolicyRequest {
                    scheduler: p.scheduler,
                    version: p.version,
                    parameters: params,
                    phy_parameters: phy
                        .into_iter()
                        .map(|(k, v)| (k["phy.".len()..].to_string(), v))
                        .collect(),
                };
                self.act(engine, CONTROLLER, |n, cx, out| {
                    if let Node::Controller(c) = n {
                        c.push_policy(cx, wap, req, out)
                    }
                });
            }
            Directive::SetCores { wap, active } => {
                let wap = self.wap_id(&wap)?;
                self.controller_up()?;
                self.act(engine, CONTROLLER, |n, cx, out| {
                    if let Node::Controller(c) = n {
                        c.set_cores(cx, wap, active, out)
                    }
                });
            }
            Directive::Rebalance => {
                self.controller_up()?;
                self.act(engine, CONTROLLER, |n, cx, out| {
                    if let Node::Controller(c) = n {
                        c.rebalance(cx, out)
                    }
                });
            }
            Directive::GetView => {
                self.controller_up()?;
                self.act(engine, CONTROLLER, |n, cx, out| {
                    if let Node::Controller(c) = n {
                        c.export_view(cx, out)
                    }
                });
            }
            Directive::RemoveController => {
                self.controller_up()?;
                self.controller_removed = true;
                engine
                    .topology_mut()
                    .set_state(CONTROLLER, SWITCH, LinkState::Down)
                    .map_err(|e| e.to_string())?;
                engine.note("remove-controller");
            }
            Directive::End => engine.note("end"),
        }
        Ok(())
    }

    fn set_link(
        &mut self,
        engine: &mut Engine<Msg>,
        a: &str,
        b: &str,
        state: LinkState,
    ) -> Result<(), String> {
        let (x, y) = (self.lookup(a)?, self.lookup(b)?);
        engine
            .topology_mut()
            .set_state(x, y, state)
            .map_err(|e| e.to_string())?;
        engine.note(format!("link {a}-{b} {state:?}"));
        Ok(())
    }

    fn controller_up(&self) -> Result<(), String> {
        if self.controller_removed {
            Err("the controller was removed".into())
        } else {
            Ok(())
        }
    }

    fn add_wap(&mut self, engine: &mut Engine<Msg>, spec: WapSpec) -> Result<(), String> {
        self.fresh_name(&spec.name)?;
        let k = self.dir.waps.len() as u32;
        let id = WapId(WAP_BASE + k);
        let mut wap = Wap::new(id, spec.access, spec.capacity_bps, spec.cores);
        wap.hs20_capable = spec.hs20;
        wap.link_quality = spec.quality;
        let domain = spec.domain.clone().unwrap_or_else(|| "home.example".into());
        let realms = if spec.realm.is_empty() {
            vec![domain.clone()]
        } else {
            spec.realm.clone()
        };
        let mut advertised = AnqpDataSet::operator(&domain, &spec.consortium, &realms);
        if !spec.eap.is_empty() {
            advertised.insert(AnqpValue::EapMethods(spec.eap.clone()));
        }
        wap.advertised = advertised;
        let c = &self.config;
        link(engine, id.node(), SWITCH, c.backhaul_latency_us, c.backhaul_capacity_bps);
        let lgw = spec.lgw.then(|| NodeId(LGW_BASE + k));
        let info = WapInfo {
            access: spec.access,
            lgw,
            quality: spec.quality,
            capacity_bps: wap.effective_capacity_bps(),
        };
        let latency = spec.latency_us.unwrap_or(spec.access.default_latency_us());
        for &ue in &self.dir.ues {
            link(engine, ue, id.node(), latency, self.config.radio_capacity_bps);
        }
        let (core_lat, core_cap, inet_lat) =
            (c.core_latency_us, c.core_capacity_bps, c.internet_latency_us);
        if let Some(l) = lgw {
            link(engine, l, id.node(), core_lat, core_cap);
            link(engine, l, INTERNET, inet_lat, core_cap);
            let node = Lgw::new(id, self.config.pcef_window_us);
            self.add(l, &format!("{}.lgw", spec.name), Node::Lgw(node));
            if let Some(every) = self.config.cdr_interval_us {
                let _ = engine.schedule(l, Msg::Tick(Tick::Charging), engine.now().after(every));
            }
        }
        self.dir.waps.insert(id, info);
        let mut node = WapNode::new(wap, lgw);
        node.radio_latency_us = latency;
        self.add(id.node(), &spec.name, Node::Wap(node));
        let now = engine.now();
        let _ = engine.schedule(id.node(), Msg::Tick(Tick::Beacon), now);
        let _ = engine.schedule(
            id.node(),
            Msg::Tick(Tick::Report),
            now.after(self.config.report_interval_us),
        );
        Ok(())
    }

    fn add_subscriber(&mut self, spec: SubscriberSpec) -> Result<(), String> {
        let password = spec.password.map(|(username, password)| PasswordCredential {
            username,
            password,
        });
        let mut p = SubscriberProfile::new(spec.imsi, spec.key, password).map_err(|e| e.to_string())?;
        p.roaming_consortia = spec.consortium.into_iter().collect();
        if let Some(r) = spec.maxrate_bps {
            p.qos_subscription.max_bitrate_bps = r;
        }
        if let Some(d) = spec.domain {
            p.home_domain = d;
        }
        if self.subscribers.contains_key(&p.imsi) {
            return Err(format!("subscriber {} is already registered", p.imsi));
        }
        for n in self.nodes.values_mut() {
            match n {
                Node::Vnf(VnfNode {
                    func: VnfFunc::Hss(h),
                    ..
                }) => h.register(p.clone()).map_err(|e| e.to_string())?,
                Node::Vnf(VnfNode {
                    func: VnfFunc::Pcrf(r),
                    ..
                }) => r.provision(p.imsi.clone(), p.qos_subscription.clone()),
                _ => {}
            }
        }
        self.subscribers.insert(p.imsi.clone(), p);
        Ok(())
    }

    fn start_flow(&mut self, engine: &mut Engine<Msg>, spec: FlowSpec) -> Result<(), String> {
        self.fresh_name(&spec.name)?;
        let ue = self.ue_id(&spec.ue)?;
        let multipath = spec
            .multipath
            .iter()
            .map(|w| self.wap_id(w))
            .collect::<Result<Vec<_>, _>>()?;
        let id = FlowId(self.flows.len() as u32 + 1);
        self.flows.insert(spec.name.clone(), (id, ue));
        let req = FlowRequest {
            id,
            name: spec.name,
            class: spec.class,
            rate_bps: spec.rate_bps,
            destination: spec.dst,
            total: spec.size,
            multipath,
        };
        self.act(engine, ue, |n, cx, out| {
            if let Node::Ue(u) = n {
                u.start_flow(cx, req, out)
            }
        });
        Ok(())
    }
}

fn link(engine: &mut Engine<Msg>, a: NodeId, b: NodeId, latency_us: u64, capacity_bps: u64) {
    engine
        .topology_mut()
        .add_link(a, b, latency_us, capacity_bps)
        .expect("fresh ids never collide");
}

fn radio_latency(nodes: &BTreeMap<NodeId, Node>, w: WapId, info: &WapInfo) -> u64 {
    match nodes.get(&w.node()) {
        Some(Node::Wap(n)) => n.radio_latency_us,
        _ => info.access.default_latency_us(),
    }
}

//! Line-oriented scenario scripts.
//!
//! ```text
//! # comment
//! set flow_tick=1ms
//! at 0ms add-wap lte1 type=cellular capacity=100Mbps
//! at 0ms add-subscriber imsi=001010000000001 key=00112233
//! at 0ms add-ue ue1 imsi=001010000000001
//! at 1ms attach ue1 via=lte1
//! at 50ms start-flow f1 ue=ue1 class=data rate=10Mbps size=1000000
//! at 2s end
//! ```
//!
//! `set` lines configure the run; `at` lines are directives. Directives are
//! sorted by time, keeping file order among equal times.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::controller::SchedulerId;
use crate::discovery::{AccessType, EapMethod};
use crate::engine::SimTime;
use crate::epc::{Destination, Imsi, ServiceClass};
use crate::units::{format_rate_compact, format_time, parse_bytes, parse_rate, parse_time};
use crate::world::Config;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: `{token}`: {reason}")]
pub struct ParseError {
    pub line: usize,
    pub token: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WapSpec {
    pub name: String,
    pub access: AccessType,
    pub capacity_bps: u64,
    pub hs20: bool,
    pub cores: u32,
    pub lgw: bool,
    /// Radio quality terminals see, in (0, 1].
    pub quality: f64,
    /// Radio latency; the technology's default if unset.
    pub latency_us: Option<u64>,
    pub domain: Option<String>,
    pub consortium: Vec<String>,
    pub realm: Vec<String>,
    /// EAP methods advertised over ANQP; both if empty.
    pub eap: Vec<EapMethod>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubscriberSpec {
    pub imsi: Imsi,
    pub key: Option<Vec<u8>>,
    pub password: Option<(String, String)>,
    pub consortium: Vec<String>,
    pub maxrate_bps: Option<u64>,
    pub domain: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowSpec {
    pub name: String,
    pub ue: String,
    pub class: ServiceClass,
    pub rate_bps: u64,
    pub dst: Destination,
    pub multipath: Vec<String>,
    /// Bytes to move; unbounded if unset.
    pub size: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicySpec {
    pub wap: String,
    pub scheduler: SchedulerId,
    pub version: Option<u64>,
    /// Scheduler parameters; `phy.<name>` keys go to the PHY set.
    pub params: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Directive {
    AddWap(WapSpec),
    AddSubscriber(SubscriberSpec),
    AddUe { name: String, imsi: Imsi },
    /// `via = None` selects a network from beacons and ANQP.
    Attach { ue: String, via: Option<String> },
    StartFlow(FlowSpec),
    BindFlow { flow: String, via: String },
    StopFlow { flow: String },
    Handover { ue: String, to: String },
    FailLink { a: String, b: String },
    RestoreLink { a: String, b: String },
    FailWap { wap: String },
    PushPolicy(PolicySpec),
    SetCores { wap: String, active: BTreeSet<u32> },
    Rebalance,
    GetView,
    RemoveController,
    End,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Timed {
    pub at: SimTime,
    pub directive: Directive,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Scenario {
    /// `set` lines in file order.
    pub settings: Vec<(String, String)>,
    pub directives: Vec<Timed>,
}

impl Scenario {
    pub fn config(&self) -> Result<Config, crate::world::ConfigError> {
        let c = Config::from_entries(self.settings.iter().map(|(k, v)| (k, v)))?;
        c.validate()?;
        Ok(c)
    }

    /// Time of the `end` directive, if any.
    pub fn end(&self) -> Option<SimTime> {
        self.directives
            .iter()
            .find(|d| d.directive == Directive::End)
            .map(|d| d.at)
    }
}

struct Line<'a> {
    no: usize,
    tokens: Vec<&'a str>,
}

impl<'a> Line<'a> {
    fn err(&self, token: &str, reason: impl ToString) -> ParseError {
        ParseError {
            line: self.no,
            token: token.to_string(),
            reason: reason.to_string(),
        }
    }
}

/// Positional arguments and `key=value` options of one directive.
struct Args<'a> {
    line: &'a Line<'a>,
    positional: Vec<&'a str>,
    options: BTreeMap<&'a str, &'a str>,
}

impl<'a> Args<'a> {
    fn new(line: &'a Line<'a>, rest: &[&'a str]) -> Result<Self, ParseError> {
        let mut positional = Vec::new();
        let mut options = BTreeMap::new();
        for &t in rest {
            match t.split_once('=') {
                Some((k, v)) => {
                    if k.is_empty() || v.is_empty() {
                        return Err(line.err(t, "expected key=value"));
                    }
                    if options.insert(k, v).is_some() {
                        return Err(line.err(t, "option given twice"));
                    }
                }
                None => positional.push(t),
            }
        }
        Ok(Self {
            line,
            positional,
            options,
        })
    }

    fn name(&self, what: &str) -> Result<String, ParseError> {
        let Some(&n) = self.positional.first() else {
            return Err(self.line.err(self.line.tokens[2], format!("missing {what}")));
        };
        check_name(self.line, n)?;
        Ok(n.to_string())
    }

    fn positional(&self, max: usize) -> Result<(), ParseError> {
        match self.positional.get(max) {
            Some(t) => Err(self.line.err(t, "unexpected argument")),
            None => Ok(()),
        }
    }

    fn take(&mut self, key: &str) -> Option<&'a str> {
        self.options.remove(key)
    }

    fn require(&mut self, key: &str) -> Result<&'a str, ParseError> {
        self.take(key)
            .ok_or_else(|| self.line.err(self.line.tokens[2], format!("missing {key}=")))
    }

    fn parse<T>(
        &mut self,
        key: &str,
        f: impl FnOnce(&str) -> Result<T, String>,
    ) -> Result<Option<T>, ParseError> {
        match self.take(key) {
            Some(v) => f(v).map(Some).map_err(|e| self.line.err(v, e)),
            None => Ok(None),
        }
    }

    fn done(self) -> Result<(), ParseError> {
        match self.options.into_iter().next() {
            Some((k, _)) => Err(self.line.err(k, "unknown option")),
            None => Ok(()),
        }
    }
}

fn check_name(line: &Line, n: &str) -> Result<(), ParseError> {
    let ok = !n.is_empty()
        && n
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | ':'));
    if ok {
        Ok(())
    } else {
        Err(line.err(n, "names use letters, digits, `_`, `.` and `:`"))
    }
}

fn boolean(v: &str) -> Result<bool, String> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err("expected true or false".into()),
    }
}

fn rate(v: &str) -> Result<u64, String> {
    parse_rate(v).map_err(|e| e.to_string())
}

fn list(v: &str) -> Vec<String> {
    v.split(',').filter(|s| !s.is_empty()).map(str::to_string).collect()
}

fn eap_method(v: &str) -> Result<EapMethod, String> {
    match v {
        "sim" => Ok(EapMethod::Sim),
        "ttls" => Ok(EapMethod::Ttls),
        _ => Err(format!("unknown EAP method `{v}`")),
    }
}

fn eap_name(m: EapMethod) -> &'static str {
    match m {
        EapMethod::Sim => "sim",
        EapMethod::Ttls => "ttls",
    }
}

fn parse_directive(line: &Line) -> Result<Directive, ParseError> {
    let verb = line.tokens[2];
    let mut a = Args::new(line, &line.tokens[3..])?;
    let d = match verb {
        "add-wap" => {
            let name = a.name("access point id")?;
            a.positional(1)?;
            let access = a
                .parse("type", |v| v.parse::<AccessType>())?
                .ok_or_else(|| line.err(verb, "missing type="))?;
            let capacity_bps = rate(a.require("capacity")?).map_err(|e| line.err(verb, e))?;
            let spec = WapSpec {
                name,
                access,
                capacity_bps,
                hs20: a.parse("hs20", boolean)?.unwrap_or(false),
                cores: a
                    .parse("cores", |v| {
                        v.parse::<u32>()
                            .ok()
                            .filter(|&n| n >= 1)
                            .ok_or_else(|| "expected a positive count".to_string())
                    })?
                    .unwrap_or(1),
                lgw: a.parse("lgw", boolean)?.unwrap_or(false),
                quality: a
                    .parse("quality", |v| {
                        v.parse::<f64>()
                            .ok()
                            .filter(|q| *q > 0.0 && *q <= 1.0)
                            .ok_or_else(|| "expected a number in (0, 1]".to_string())
                    })?
                    .unwrap_or(1.0),
                latency_us: a.parse("latency", |v| {
                    parse_time(v).map(SimTime::as_micros).map_err(|e| e.to_string())
                })?,
                domain: a.take("domain").map(str::to_string),
                consortium: a.take("consortium").map(list).unwrap_or_default(),
                realm: a.take("realm").map(list).unwrap_or_default(),
                eap: a
                    .parse("eap", |v| v.split(',').map(eap_method).collect())?
                    .unwrap_or_default(),
            };
            if spec.capacity_bps == 0 {
                return Err(line.err("capacity", "must be positive"));
            }
            Directive::AddWap(spec)
        }
        "add-subscriber" => {
            a.positional(0)?;
            let imsi = a
                .parse("imsi", |v| v.parse::<Imsi>().map_err(|e| e.to_string()))?
                .ok_or_else(|| line.err(verb, "missing imsi="))?;
            let key = a.parse("key", |v| hex::decode(v).map_err(|e| e.to_string()))?;
            let password = a.parse("password", |v| {
                v.split_once(':')
                    .map(|(u, p)| (u.to_string(), p.to_string()))
                    .ok_or_else(|| "expected user:pass".to_string())
            })?;
            if key.is_none() && password.is_none() {
                return Err(line.err(verb, "needs key= or password="));
            }
            Directive::AddSubscriber(SubscriberSpec {
                imsi,
                key,
                password,
                consortium: a.take("consortium").map(list).unwrap_or_default(),
                maxrate_bps: a.parse("maxrate", rate)?,
                domain: a.take("domain").map(str::to_string),
            })
        }
        "add-ue" => {
            let name = a.name("terminal id")?;
            a.positional(1)?;
            let imsi = a
                .parse("imsi", |v| v.parse::<Imsi>().map_err(|e| e.to_string()))?
                .ok_or_else(|| line.err(verb, "missing imsi="))?;
            Directive::AddUe { name, imsi }
        }
        "attach" => {
            let ue = a.name("terminal")?;
            a.positional(1)?;
            let via = a.require("via")?;
            let via = if via == "auto" {
                None
            } else {
                check_name(line, via)?;
                Some(via.to_string())
            };
            Directive::Attach { ue, via }
        }
        "start-flow" => {
            let name = a.name("flow id")?;
            a.positional(1)?;
            let ue = a.require("ue")?;
            check_name(line, ue)?;
            let class = a.require("class")?.parse().expect("infallible");
            let rate_bps = a
                .parse("rate", rate)?
                .ok_or_else(|| line.err(verb, "missing rate="))?;
            let dst = a
                .parse("dst", |v| match v {
                    "internet" => Ok(Destination::Internet),
                    "local" => Ok(Destination::Local),
                    _ => Err("expected internet or local".to_string()),
                })?
                .unwrap_or(Destination::Internet);
            let multipath = a.take("multipath").map(list).unwrap_or_default();
            for w in &multipath {
                check_name(line, w)?;
            }
            let size = a.parse("size", |v| {
                let b = parse_bytes(v).map_err(|e| e.to_string())?;
                if b.fract() != 0.0 || b <= 0.0 || b > u64::MAX as f64 {
                    return Err("expected a positive whole number of bytes".into());
                }
                Ok(b as u64)
            })?;
            if rate_bps == 0 {
                return Err(line.err("rate", "must be positive"));
            }
            Directive::StartFlow(FlowSpec {
                name,
                ue: ue.to_string(),
                class,
                rate_bps,
                dst,
                multipath,
                size,
            })
        }
        "bind-flow" => {
            let flow = a.name("flow")?;
            a.positional(1)?;
            let via = a.require("via")?;
            check_name(line, via)?;
            Directive::BindFlow {
                flow,
                via: via.to_string(),
            }
        }
        "stop-flow" => {
            let flow = a.name("flow")?;
            a.positional(1)?;
            Directive::StopFlow { flow }
        }
        "handover" => {
            let ue = a.name("terminal")?;
            a.positional(1)?;
            let to = a.require("to")?;
            check_name(line, to)?;
            Directive::Handover {
                ue,
                to: to.to_string(),
            }
        }
        "fail-link" | "restore-link" => {
            a.positional(1)?;
            let Some(&pair) = a.positional.first() else {
                return Err(line.err(verb, "missing <a>-<b>"));
            };
            let Some((x, y)) = pair.split_once('-') else {
                return Err(line.err(pair, "expected <a>-<b>"));
            };
            check_name(line, x)?;
            check_name(line, y)?;
            let (a_, b_) = (x.to_string(), y.to_string());
            if verb == "fail-link" {
                Directive::FailLink { a: a_, b: b_ }
            } else {
                Directive::RestoreLink { a: a_, b: b_ }
            }
        }
        "fail-wap" => {
            let wap = a.name("access point")?;
            a.positional(1)?;
            Directive::FailWap { wap }
        }
        "push-policy" => {
            let wap = a.name("access point")?;
            a.positional(1)?;
            let scheduler = a
                .parse("scheduler", |v| v.parse::<SchedulerId>().map_err(|e| e.to_string()))?
                .ok_or_else(|| line.err(verb, "missing scheduler="))?;
            let version = a.parse("version", |v| v.parse::<u64>().map_err(|e| e.to_string()))?;
            let params = std::mem::take(&mut a.options)
                .into_iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect();
            Directive::PushPolicy(PolicySpec {
                wap,
                scheduler,
                version,
                params,
            })
        }
        "set-cores" => {
            let wap = a.name("access point")?;
            a.positional(1)?;
            let active = a.require("active")?;
            let active = if active == "none" {
                BTreeSet::new()
            } else {
                active
                    .split(',')
                    .map(|c| c.parse::<u32>().map_err(|_| line.err(c, "expected a core index")))
                    .collect::<Result<_, _>>()?
            };
            Directive::SetCores { wap, active }
        }
        "rebalance" => {
            a.positional(0)?;
            Directive::Rebalance
        }
        "get-view" => {
            a.positional(0)?;
            Directive::GetView
        }
        "remove-controller" => {
            a.positional(0)?;
            Directive::RemoveController
        }
        "end" => {
            a.positional(0)?;
            Directive::End
        }
        other => return Err(line.err(other, "unknown directive")),
    };
    a.done()?;
    Ok(d)
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ParseError> {
    let mut scenario = Scenario::default();
    for (i, raw) in text.lines().enumerate() {
        let content = raw.split('#').next().unwrap_or("");
        let tokens: Vec<&str> = content.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        let line = Line { no: i + 1, tokens };
        match line.tokens[0] {
            "set" => {
                let [_, kv] = line.tokens[..] else {
                    return Err(line.err(line.tokens[0], "expected set <key>=<value>"));
                };
                let Some((k, v)) = kv.split_once('=') else {
                    return Err(line.err(kv, "expected <key>=<value>"));
                };
                Config::default().set(k, v).map_err(|e| line.err(kv, e.reason))?;
                scenario.settings.push((k.to_string(), v.to_string()));
            }
            "at" => {
                let Some(&t) = line.tokens.get(1) else {
                    return Err(line.err("at", "missing time"));
                };
                let at = parse_time(t).map_err(|e| line.err(t, e))?;
                if line.tokens.len() < 3 {
                    return Err(line.err(t, "missing directive"));
                }
                let directive = parse_directive(&line)?;
                scenario.directives.push(Timed { at, directive });
            }
            other => return Err(line.err(other, "expected `at` or `set`")),
        }
    }
    // Stable: equal times keep file order.
    scenario.directives.sort_by_key(|d| d.at);
    Ok(scenario)
}

fn join(v: &[String]) -> String {
    v.join(",")
}

impl fmt::Display for Directive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Directive::AddWap(w) => {
                write!(
                    f,
                    "add-wap {} type={} capacity={}",
                    w.name,
                    w.access,
                    format_rate_compact(w.capacity_bps)
                )?;
                if w.hs20 {
                    f.write_str(" hs20=true")?;
                }
                if w.cores != 1 {
                    write!(f, " cores={}", w.cores)?;
                }
                if w.lgw {
                    f.write_str(" lgw=true")?;
                }
                if w.quality != 1.0 {
                    write!(f, " quality={}", w.quality)?;
                }
                if let Some(l) = w.latency_us {
                    write!(f, " latency={}", format_time(SimTime::from_micros(l)))?;
                }
                if let Some(d) = &w.domain {
                    write!(f, " domain={d}")?;
                }
                if !w.consortium.is_empty() {
                    write!(f, " consortium={}", join(&w.consortium))?;
                }
                if !w.realm.is_empty() {
                    write!(f, " realm={}", join(&w.realm))?;
                }
                if !w.eap.is_empty() {
                    let m: Vec<&str> = w.eap.iter().map(|m| eap_name(*m)).collect();
                    write!(f, " eap={}", m.join(","))?;
                }
                Ok(())
            }
            Directive::AddSubscriber(s) => {
                write!(f, "add-subscriber imsi={}", s.imsi)?;
                if let Some(k) = &s.key {
                    write!(f, " key={}", hex::encode(k))?;
                }
                if let Some((u, p)) = &s.password {
                    write!(f, " password={u}:{p}")?;
                }
                if !s.consortium.is_empty() {
                    write!(f, " consortium={}", join(&s.consortium))?;
                }
                if let Some(r) = s.maxrate_bps {
                    write!(f, " maxrate={}", format_rate_compact(r))?;
                }
                if let Some(d) = &s.domain {
                    write!(f, " domain={d}")?;
                }
                Ok(())
            }
            Directive::AddUe { name, imsi } => write!(f, "add-ue {name} imsi={imsi}"),
            Directive::Attach { ue, via } => {
                write!(f, "attach {ue} via={}", via.as_deref().unwrap_or("auto"))
            }
            Directive::StartFlow(s) => {
                write!(
                    f,
                    "start-flow {} ue={} class={} rate={}",
                    s.name,
                    s.ue,
                    s.class,
                    format_rate_compact(s.rate_bps)
                )?;
                if s.dst != Destination::Internet {
                    write!(f, " dst={}", s.dst)?;
                }
                if !s.multipath.is_empty() {
                    write!(f, " multipath={}", join(&s.multipath))?;
                }
                if let Some(n) = s.size {
                    write!(f, " size={n}")?;
                }
                Ok(())
            }
            Directive::BindFlow { flow, via } => write!(f, "bind-flow {flow} via={via}"),
            Directive::StopFlow { flow } => write!(f, "stop-flow {flow}"),
            Directive::Handover { ue, to } => write!(f, "handover {ue} to={to}"),
            Directive::FailLink { a, b } => write!(f, "fail-link {a}-{b}"),
            Directive::RestoreLink { a, b } => write!(f, "restore-link {a}-{b}"),
            Directive::FailWap { wap } => write!(f, "fail-wap {wap}"),
            Directive::PushPolicy(p) => {
                write!(f, "push-policy {} scheduler={}", p.wap, p.scheduler)?;
                if let Some(v) = p.version {
                    write!(f, " version={v}")?;
                }
                for (k, v) in &p.params {
                    write!(f, " {k}={v}")?;
                }
                Ok(())
            }
            Directive::SetCores { wap, active } => {
                if active.is_empty() {
                    return write!(f, "set-cores {wap} active=none");
                }
                let cores: Vec<String> = active.iter().map(u32::to_string).collect();
                write!(f, "set-cores {wap} active={}", cores.join(","))
            }
            Directive::Rebalance => f.write_str("rebalance"),
            Directive::GetView => f.write_str("get-view"),
            Directive::RemoveController => f.write_str("remove-controller"),
            Directive::End => f.write_str("end"),
        }
    }
}

/// Renders a scenario that parses back to an equal one.
pub fn print_scenario(s: &Scenario) -> String {
    let mut out = String::new();
    for (k, v) in &s.settings {
        let _ = writeln!(out, "set {k}={v}");
    }
    for d in &s.directives {
        let _ = writeln!(out, "at {} {}", format_time(d.at), d.directive);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = "\
at 0ms add-wap lte1 type=cellular capacity=100Mbps
at 0ms add-subscriber imsi=001010000000001 key=00112233
at 0ms add-ue ue1 imsi=001010000000001
at 1ms attach ue1 via=lte1
at 50ms start-flow f1 ue=ue1 class=data rate=10Mbps
at 2s end
";

    #[test]
    fn six_line_example() {
        let s = parse_scenario(EXAMPLE).unwrap();
        assert_eq!(s.directives.len(), 6);
        assert_eq!(s.end(), Some(SimTime::from_secs(2)));
    }

    #[test]
    fn unknown_directive_names_line_and_token() {
        let e = parse_scenario("# header\nat 5ms frobnicate x\n").unwrap_err();
        assert_eq!(e.line, 2);
        assert_eq!(e.token, "frobnicate");
    }

    #[test]
    fn sorted_stably_by_time() {
        let s = parse_scenario("at 10ms get-view\nat 5ms rebalance\nat 5ms end\n").unwrap();
        let order: Vec<_> = s.directives.iter().map(|d| d.directive.clone()).collect();
        assert_eq!(order, vec![Directive::Rebalance, Directive::End, Directive::GetView]);
    }

    #[test]
    fn bad_options() {
        for (text, token) in [
            ("at 0ms add-wap w type=wifi capacity=1Mbps colour=red", "colour"),
            ("at 0ms add-wap w type=laser capacity=1Mbps", "laser"),
            ("at 0ms add-ue u imsi=123", "123"),
            ("at x attach u via=w", "x"),
            ("set frobnicate=1", "frobnicate=1"),
            ("at 0ms fail-link ab", "ab"),
        ] {
            let e = parse_scenario(text).unwrap_err();
            assert_eq!(e.token, token, "{text}");
        }
    }

    #[test]
    fn round_trip_example() {
        let s = parse_scenario(EXAMPLE).unwrap();
        assert_eq!(parse_scenario(&print_scenario(&s)).unwrap(), s);
    }
}

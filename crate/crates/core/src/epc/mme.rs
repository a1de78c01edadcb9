use std::collections::BTreeMap;

use super::{Bearer, BearerId, EpcError, Imsi, ServiceClass, UeContext, UeState};
use crate::controller::VnfKind;
use crate::discovery::{AccessType, AuthSuccess, EapMessage, EapMethod, SimServer, TtlsServer};
use crate::engine::NodeId;
use crate::ids::{FlowId, WapId};
use crate::proto::{AttachAccept, BearerChange, Msg};
use crate::world::{Address, Audit, Ctx, Outbox};

#[derive(Debug, Clone)]
enum Stage {
    AwaitVector,
    Sim(SimServer),
    Ttls(Box<TtlsServer>),
    /// Authenticated; waiting for the gateways.
    AwaitSession,
}

/// An attach the MME has started but not finished.
#[derive(Debug, Clone)]
pub struct PendingAttach {
    pub wap: WapId,
    pub access: AccessType,
    pub imsi: Imsi,
    pub method: EapMethod,
    stage: Stage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Handover {
    source: WapId,
    target: WapId,
}

/// Attach, authentication and session bookkeeping for the terminals
/// assigned to this instance.
#[derive(Debug, Clone, Default)]
pub struct Mme {
    contexts: BTreeMap<NodeId, UeContext>,
    pending: BTreeMap<NodeId, PendingAttach>,
    anchors: BTreeMap<NodeId, (NodeId, NodeId)>,
    handovers: BTreeMap<NodeId, Handover>,
    activated: BTreeMap<NodeId, Vec<FlowId>>,
    next_bearer: u32,
}

impl Mme {
    pub fn context(&self, ue: NodeId) -> Option<&UeContext> {
        self.contexts.get(&ue)
    }

    pub fn contexts(&self) -> impl Iterator<Item = &UeContext> {
        self.contexts.values()
    }

    /// `(anchor SGW, PGW)` of a terminal's session.
    pub fn anchor(&self, ue: NodeId) -> Option<(NodeId, NodeId)> {
        self.anchors.get(&ue).copied()
    }

    pub fn handle(&mut self, cx: &Ctx, src: NodeId, msg: Msg, out: &mut Outbox) {
        match msg {
            Msg::InitialUe {
                ue,
                wap,
                access,
                imsi,
                method,
            } => self.initial_ue(cx, ue, wap, access, imsi, method, out),
            Msg::AuthInfoAnswer { ue, vector } => {
                let Some(p) = self.pending.get_mut(&ue) else { return };
                let vector = match vector {
                    Ok(v) => v,
                    Err(e) => return self.reject(ue, e, out),
                };
                let first = match p.method {
                    EapMethod::Sim => SimServer::new(&vector).map(|s| {
                        let c = s.challenge();
                        p.stage = Stage::Sim(s);
                        c
                    }),
                    EapMethod::Ttls => {
                        TtlsServer::new(cx.config.certificate.clone(), &vector).map(|s| {
                            let h = s.hello();
                            p.stage = Stage::Ttls(Box::new(s));
                            h
                        })
                    }
                };
                match first {
                    Ok(eap) => out.send(p.wap, Msg::DownNas { ue, eap }),
                    Err(e) => self.auth_failed(ue, e.to_string(), out),
                }
            }
            Msg::UpNas { ue, eap } => self.up_nas(cx, ue, eap, out),
            Msg::CreateSessionResponse { ue, result } => match result {
                Ok((ip, pgw)) => {
                    self.anchors.insert(ue, (src, pgw));
                    if let Some(ctx) = self.contexts.get_mut(&ue) {
                        ctx.ip = Some(ip);
                    }
                    self.complete(ue, out);
                }
                Err(e) => self.reject(ue, e, out),
            },
            Msg::ModifyBearerResponse { ue, change } => match change {
                BearerChange::Add(_) => self.complete(ue, out),
                BearerChange::Move { from, to } => {
                    let Some(ctx) = self.contexts.get(&ue) else { return };
                    self.handovers.remove(&ue);
                    out.audit(Audit::HandoverCompleted {
                        ue,
                        source: from,
                        target: to,
                        ip: ctx.ip.expect("attached"),
                        anchor_sgw: self.anchors[&ue].0,
                    });
                }
            },
            Msg::BearerActivated { ue, flow, class } => self.bearer_activated(ue, flow, class, out),
            Msg::HandoverRequired {
                ue,
                source,
                target,
                demand_bps,
            } => self.handover_required(cx, ue, source, target, demand_bps, out),
            Msg::HandoverRequestAck { ue, target } => {
                if let Some(h) = self.handovers.get(&ue).filter(|h| h.target == target) {
                    out.send(h.source, Msg::HandoverCommand { ue, target });
                }
            }
            Msg::HandoverFailure { ue, target } => {
                if let Some(h) = self.handovers.remove(&ue) {
                    self.handover_failed(ue, h.source, target, "target cannot take the load", out);
                }
            }
            Msg::HandoverNotify { ue, source, target } => {
                let Some(ctx) = self.contexts.get_mut(&ue) else { return };
                let secure = ctx.attachments.remove(&source).unwrap_or(true);
                ctx.attachments.insert(target, secure);
                let sgw = self.anchors[&ue].0;
                out.send(
                    sgw,
                    Msg::ModifyBearer {
                        ue,
                        change: BearerChange::Move { from: source, to: target },
                    },
                );
            }
            other => out.audit(Audit::Error(format!("mme: unexpected {other:?}"))),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn initial_ue(
        &mut self,
        cx: &Ctx,
        ue: NodeId,
        wap: WapId,
        access: AccessType,
        imsi: Imsi,
        method: EapMethod,
        out: &mut Outbox,
    ) {
        let busy = self.pending.contains_key(&ue) || self.handovers.contains_key(&ue);
        let clash = self.contexts.get(&ue).is_some_and(|c| {
            c.attachments.contains_key(&wap)
                || c.attachments.keys().any(|w| {
                    cx.dir.waps.get(w).map(|i| i.access.slot()) == Some(access.slot())
                })
        });
        if busy || clash {
            out.send(
                wap,
                Msg::AttachReject {
                    ue,
                    wap,
                    reason: EpcError::AlreadyAttached,
                },
            );
            out.audit(Audit::AttachRejected {
                ue,
                wap,
                reason: EpcError::AlreadyAttached.to_string(),
            });
            return;
        }
        let ctx = self
            .contexts
            .entry(ue)
            .or_insert_with(|| UeContext::new(ue, imsi.clone()));
        if ctx.state == UeState::Detached {
            ctx.state = UeState::Authenticating;
        }
        self.pending.insert(
            ue,
            PendingAttach {
                wap,
                access,
                imsi: imsi.clone(),
                method,
                stage: Stage::AwaitVector,
            },
        );
        out.send(Address::Service(VnfKind::Hss), Msg::AuthInfoRequest { ue, imsi });
    }

    fn up_nas(&mut self, cx: &Ctx, ue: NodeId, eap: EapMessage, out: &mut Outbox) {
        let Some(p) = self.pending.get_mut(&ue) else { return };
        let wap = p.wap;
        let outcome: Result<(AuthSuccess, Option<[u8; 32]>), String> = match (&mut p.stage, &eap) {
            (Stage::Sim(server), EapMessage::SimResponse { response }) => server
                .verify(response)
                .map(|ok| (ok, Some(*response)))
                .map_err(|e| e.to_string()),
            (Stage::Sim(_), EapMessage::PeerAbort(e)) => Err(e.to_string()),
            (Stage::Ttls(server), _) => {
                let step = server.on_message(&eap);
                // Final Success/Failure replies are sent below.
                match step.outcome {
                    None => {
                        if let Some(reply) = step.reply {
                            out.send(wap, Msg::DownNas { ue, eap: reply });
                        }
                        return;
                    }
                    Some(Ok(ok)) => Ok((ok, None)),
                    Some(Err(e)) => Err(e.to_string()),
                }
            }
            _ => Err("unexpected EAP message".into()),
        };
        match outcome {
            Ok((ok, response)) => {
                p.stage = Stage::AwaitSession;
                let imsi = p.imsi.clone();
                out.send(wap, Msg::DownNas { ue, eap: EapMessage::Success });
                out.audit(Audit::AuthSucceeded {
                    ue,
                    wap,
                    imsi: imsi.clone(),
                    method: ok.method,
                    nonce: ok.nonce,
                    response,
                    session_key: ok.session_key,
                });
                match self.anchors.get(&ue) {
                    Some(&(sgw, _)) => out.send(
                        sgw,
                        Msg::ModifyBearer {
                            ue,
                            change: BearerChange::Add(wap),
                        },
                    ),
                    None => out.send(
                        Address::Service(VnfKind::Sgw),
                        Msg::CreateSession {
                            ue,
                            imsi,
                            wap,
                            mme: cx.me,
                        },
                    ),
                }
            }
            Err(reason) => self.auth_failed(ue, reason, out),
        }
    }

    fn auth_failed(&mut self, ue: NodeId, reason: String, out: &mut Outbox) {
        let Some(p) = self.pending.get(&ue) else { return };
        out.send(
            p.wap,
            Msg::DownNas {
                ue,
                eap: EapMessage::Failure(crate::discovery::AuthError::AuthenticationFailed),
            },
        );
        out.audit(Audit::AuthFailed { ue, wap: p.wap, reason });
        self.reject(ue, EpcError::AuthenticationFailed, out);
    }

    fn reject(&mut self, ue: NodeId, reason: EpcError, out: &mut Outbox) {
        let Some(p) = self.pending.remove(&ue) else { return };
        if let Some(ctx) = self.contexts.get_mut(&ue) {
            if ctx.attachments.is_empty() {
                ctx.state = UeState::Detached;
            }
        }
        out.audit(Audit::AttachRejected {
            ue,
            wap: p.wap,
            reason: reason.to_string(),
        });
        out.send(p.wap, Msg::AttachReject { ue, wap: p.wap, reason });
    }

    fn complete(&mut self, ue: NodeId, out: &mut Outbox) {
        let Some(p) = self.pending.remove(&ue) else { return };
        let (sgw, pgw) = self.anchors[&ue];
        let ctx = self.contexts.get_mut(&ue).expect("created at InitialUe");
        ctx.attachments.insert(p.wap, true);
        if matches!(ctx.state, UeState::Detached | UeState::Authenticating) {
            ctx.state = UeState::Attached;
        }
        let ip = ctx.ip.expect("set by the session");
        out.audit(Audit::Attached {
            ue,
            wap: p.wap,
            ip,
            anchor_sgw: sgw,
            state: ctx.state,
        });
        if ctx.bearers.is_empty() {
            let bearer = Bearer {
                id: BearerId(self.next_bearer),
                ue,
                qos_class: ServiceClass::BestEffort,
                anchor_sgw: sgw,
                pgw,
            };
            self.next_bearer += 1;
            out.audit(Audit::BearerCreated {
                ue,
                bearer: bearer.id,
                class: bearer.qos_class.clone(),
                anchor_sgw: sgw,
                pgw,
            });
            ctx.bearers.push(bearer);
        }
        out.send(
            p.wap,
            Msg::ContextSetup {
                ue,
                sgw,
                accept: AttachAccept {
                    wap: p.wap,
                    access: p.access,
                    ip,
                    secure: true,
                    capacity_bps: 0,
                    lgw: None,
                },
            },
        );
    }

    fn bearer_activated(&mut self, ue: NodeId, flow: FlowId, class: ServiceClass, out: &mut Outbox) {
        let Some(ctx) = self.contexts.get_mut(&ue) else { return };
        if ctx.attachments.is_empty() {
            return;
        }
        let seen = self.activated.entry(ue).or_default();
        if seen.contains(&flow) {
            return;
        }
        seen.push(flow);
        let (sgw, pgw) = self.anchors[&ue];
        let bearer = Bearer {
            id: BearerId(self.next_bearer),
            ue,
            qos_class: class,
            anchor_sgw: sgw,
            pgw,
        };
        self.next_bearer += 1;
        ctx.state = UeState::Connected;
        out.audit(Audit::BearerCreated {
            ue,
            bearer: bearer.id,
            class: bearer.qos_class.clone(),
            anchor_sgw: sgw,
            pgw,
        });
        ctx.bearers.push(bearer);
    }

    fn handover_required(
        &mut self,
        cx: &Ctx,
        ue: NodeId,
        source: WapId,
        target: WapId,
        demand_bps: u64,
        out: &mut Outbox,
    ) {
        let attached_here = self
            .contexts
            .get(&ue)
            .is_some_and(|c| c.attachments.contains_key(&source));
        let reason = if !attached_here || self.pending.contains_key(&ue) {
            Some("terminal is not attached")
        } else if self.handovers.contains_key(&ue) {
            Some("handover already in progress")
        } else if !cx.dir.waps.contains_key(&target) {
            Some("unknown target")
        } else if self.contexts[&ue].attachments.contains_key(&target) {
            Some("already attached to the target")
        } else {
            None
        };
        if let Some(reason) = reason {
            return self.handover_failed(ue, source, target, reason, out);
        }
        self.handovers.insert(ue, Handover { source, target });
        out.audit(Audit::HandoverStarted { ue, source, target });
        out.send(
            target,
            Msg::HandoverRequest {
                ue,
                source,
                demand_bps,
                sgw: self.anchors[&ue].0,
            },
        );
    }

    fn handover_failed(
        &mut self,
        ue: NodeId,
        source: WapId,
        target: WapId,
        reason: &str,
        out: &mut Outbox,
    ) {
        out.audit(Audit::HandoverRejected {
            ue,
            target,
            reason: reason.to_string(),
        });
        out.send(
            source,
            Msg::HandoverPreparationFailure {
                ue,
                target,
                reason: reason.to_string(),
            },
        );
    }
}

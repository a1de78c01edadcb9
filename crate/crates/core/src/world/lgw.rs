use crate::engine::NodeId;
use crate::epc::{Breakout, Charging, Direction, Verdict};
use crate::ids::WapId;
use crate::proto::{Msg, Packet, PacketKind, Tick};

use super::{Audit, Ctx, Outbox, INTERNET};

/// Local gateway next to an access point: breaks traffic out to the
/// Internet and charges it as Local.
#[derive(Debug, Clone)]
pub struct Lgw {
    pub host: WapId,
    pub charging: Charging,
}

impl Lgw {
    pub fn new(host: WapId, window_us: u64) -> Self {
        Self {
            host,
            charging: Charging::new(Breakout::Local, window_us),
        }
    }

    pub fn handle(&mut self, cx: &Ctx, _src: NodeId, msg: Msg, out: &mut Outbox) {
        match msg {
            Msg::PolicyAnswer { descriptor, rule } => {
                for (pkt, dir) in self.charging.install(cx.now, *descriptor, rule, out) {
                    self.forward(cx, pkt, dir, out);
                }
            }
            Msg::Tick(Tick::Charging) => self.charging.interim(cx.now, out),
            Msg::Data(pkt) => {
                let dir = if pkt.is_downlink() {
                    Direction::Down
                } else {
                    Direction::Up
                };
                if let Verdict::Forward(p) = self.charging.admit(cx.now, *pkt, dir, out) {
                    self.forward(cx, p, dir, out);
                }
            }
            other => out.audit(Audit::Error(format!("lgw: unexpected {other:?}"))),
        }
    }

    fn forward(&mut self, cx: &Ctx, pkt: Packet, dir: Direction, out: &mut Outbox) {
        if matches!(pkt.kind, PacketKind::End) {
            self.charging.close(pkt.flow, cx.now, out);
        }
        match dir {
            Direction::Up => out.send(INTERNET, Msg::data(pkt)),
            Direction::Down => out.send(self.host, Msg::data(pkt)),
        }
    }
}

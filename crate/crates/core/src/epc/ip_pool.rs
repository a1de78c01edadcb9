use std::collections::BTreeSet;
use std::net::Ipv4Addr;
use std::str::FromStr;

use super::EpcError;

/// UE address pool. Host `.1` is the gateway; the broadcast address is
/// never handed out. Allocation always returns the lowest free address.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IpPool {
    network: u32,
    prefix: u8,
    live: BTreeSet<u32>,
}

impl IpPool {
    pub fn new(network: Ipv4Addr, prefix: u8) -> Result<Self, EpcError> {
        if !(8..=30).contains(&prefix) {
            return Err(EpcError::InvalidPool(format!("{network}/{prefix}")));
        }
        let mask = u32::MAX << (32 - prefix);
        Ok(Self {
            network: u32::from(network) & mask,
            prefix,
            live: BTreeSet::new(),
        })
    }

    fn host_range(&self) -> (u32, u32) {
        let size = 1u32 << (32 - self.prefix);
        (2, size - 2)
    }

    /// The pool of the same size directly after this one (`10.0.0.0/24` →
    /// `10.0.1.0/24`).
    pub fn next_block(&self, n: u32) -> IpPool {
        let size = 1u32 << (32 - self.prefix);
        IpPool {
            network: self.network.wrapping_add(size.wrapping_mul(n)),
            prefix: self.prefix,
            live: BTreeSet::new(),
        }
    }

    pub fn allocate(&mut self) -> Result<Ipv4Addr, EpcError> {
        let (lo, hi) = self.host_range();
        let mut candidate = lo;
        for &used in self.live.range(lo..=hi) {
            if used != candidate {
                break;
            }
            candidate += 1;
        }
        if candidate > hi {
            return Err(EpcError::PoolExhausted);
        }
        self.live.insert(candidate);
        Ok(Ipv4Addr::from(self.network + candidate))
    }

    pub fn release(&mut self, addr: Ipv4Addr) -> bool {
        let host = u32::from(addr).wrapping_sub(self.network);
        self.live.remove(&host)
    }

    pub fn contains(&self, addr: Ipv4Addr) -> bool {
        let host = u32::from(addr).wrapping_sub(self.network);
        self.live.contains(&host)
    }

    pub fn in_use(&self) -> usize {
        self.live.len()
    }
}

impl FromStr for IpPool {
    type Err = EpcError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || EpcError::InvalidPool(s.to_string());
        let (addr, prefix) = s.split_once('/').ok_or_else(bad)?;
        let addr: Ipv4Addr = addr.parse().map_err(|_| bad())?;
        let prefix: u8 = prefix.parse().map_err(|_| bad())?;
        IpPool::new(addr, prefix)
    }
}

//! Flat IPv4 pool standing in for DHCP: lowest free address first.

use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::UnitId;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PoolError {
    #[error("address pool exhausted")]
    Exhausted,
    #[error("address {0} is not leased")]
    NotLeased(Ipv4Addr),
    #[error("invalid pool range {0}-{1}")]
    InvalidRange(Ipv4Addr, Ipv4Addr),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IpLease {
    pub ip_address: Ipv4Addr,
    pub leased_to: UnitId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IpPool {
    first: u32,
    last: u32,
    leases: BTreeMap<u32, UnitId>,
}

impl Default for IpPool {
    fn default() -> Self {
        Self::new(Ipv4Addr::new(10, 42, 0, 2), Ipv4Addr::new(10, 42, 0, 254))
            .expect("valid default range")
    }
}

impl IpPool {
    pub fn new(first: Ipv4Addr, last: Ipv4Addr) -> Result<Self, PoolError> {
        let (f, l) = (u32::from(first), u32::from(last));
        if f > l {
            return Err(PoolError::InvalidRange(first, last));
        }
        Ok(Self {
            first: f,
            last: l,
            leases: BTreeMap::new(),
        })
    }

    pub fn allocate(&mut self, unit: UnitId) -> Result<IpLease, PoolError> {
        // leases are ordered, so the first gap is the lowest free address
        let mut candidate = self.first;
        for &leased in self.leases.keys() {
            if leased != candidate {
                break;
            }
            if candidate == self.last {
                return Err(PoolError::Exhausted);
            }
            candidate += 1;
        }
        if candidate > self.last {
            return Err(PoolError::Exhausted);
        }
        self.leases.insert(candidate, unit.clone());
        Ok(IpLease {
            ip_address: Ipv4Addr::from(candidate),
            leased_to: unit,
        })
    }

    pub fn release(&mut self, ip: Ipv4Addr) -> Result<UnitId, PoolError> {
        self.leases
            .remove(&u32::from(ip))
            .ok_or(PoolError::NotLeased(ip))
    }

    pub fn leases(&self) -> Vec<IpLease> {
        self.leases
            .iter()
            .map(|(ip, unit)| IpLease {
                ip_address: Ipv4Addr::from(*ip),
                leased_to: unit.clone(),
            })
            .collect()
    }

    pub fn leased_count(&self) -> usize {
        self.leases.len()
    }

    pub fn capacity(&self) -> usize {
        (self.last - self.first) as usize + 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{DeploymentId, UnitKind};

    fn unit(n: u64) -> UnitId {
        UnitId::new(DeploymentId::from_counter(n), UnitKind::RU)
    }

    #[test]
    fn lowest_free_first() {
        let mut pool = IpPool::default();
        assert_eq!(pool.capacity(), 253);
        assert_eq!(
            pool.allocate(unit(1)).unwrap().ip_address,
            Ipv4Addr::new(10, 42, 0, 2)
        );
        assert_eq!(
            pool.allocate(unit(2)).unwrap().ip_address,
            Ipv4Addr::new(10, 42, 0, 3)
        );
        pool.release(Ipv4Addr::new(10, 42, 0, 2)).unwrap();
        assert_eq!(
            pool.allocate(unit(3)).unwrap().ip_address,
            Ipv4Addr::new(10, 42, 0, 2)
        );
        assert_eq!(
            pool.allocate(unit(4)).unwrap().ip_address,
            Ipv4Addr::new(10, 42, 0, 4)
        );
    }

    #[test]
    fn exhaustion() {
        let mut pool = IpPool::new(Ipv4Addr::new(10, 0, 0, 1), Ipv4Addr::new(10, 0, 0, 3)).unwrap();
        for i in 0..3 {
            pool.allocate(unit(i)).unwrap();
        }
        assert_eq!(pool.allocate(unit(9)), Err(PoolError::Exhausted));
        let full = IpPool::default();
        let mut full = full;
        for i in 0..253 {
            full.allocate(unit(i)).unwrap();
        }
        assert_eq!(full.allocate(unit(999)), Err(PoolError::Exhausted));
    }

    #[test]
    fn release_unknown() {
        let mut pool = IpPool::default();
        assert_eq!(
            pool.release(Ipv4Addr::new(10, 42, 0, 9)),
            Err(PoolError::NotLeased(Ipv4Addr::new(10, 42, 0, 9)))
        );
    }
}

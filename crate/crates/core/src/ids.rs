//! Typed identifiers.
//!
//! Every entity gets a sequential numeric id rendered with a short prefix
//! (`ns-3`, `vm-12`). Sequential allocation keeps virtual-time runs
//! reproducible, which random UUIDs would not.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed identifier `{0}`")]
pub struct ParseIdError(pub String);

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident, $prefix:literal) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub u64);

        impl $name {
            pub const PREFIX: &'static str = $prefix;
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}-{}", $prefix, self.0)
            }
        }

        impl FromStr for $name {
            type Err = ParseIdError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let digits = s
                    .strip_prefix(concat!($prefix, "-"))
                    .unwrap_or(s);
                digits
                    .parse::<u64>()
                    .map($name)
                    .map_err(|_| ParseIdError(s.to_string()))
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let raw = String::deserialize(deserializer)?;
                raw.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

id_type!(
    /// A network service instance.
    NsId,
    "ns"
);
id_type!(
    /// A live VNF instance inside a network service.
    VnfId,
    "vnf"
);
id_type!(VmId, "vm");
id_type!(HostId, "host");
id_type!(NetworkId, "net");
id_type!(RrhId, "rrh");
id_type!(SliceId, "slice");
id_type!(TaskId, "task");
id_type!(
    /// One firing of an alert rule. Distinct from the alarm identifier,
    /// which names the actuator binding and is shared by every firing.
    AlarmInstanceId,
    "alarm"
);
id_type!(SwapId, "swap");

/// Monotone counter handing out ids of one kind.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdSeq(u64);

impl IdSeq {
    pub fn starting_at(first: u64) -> Self {
        IdSeq(first)
    }

    pub fn next_raw(&mut self) -> u64 {
        let id = self.0;
        self.0 += 1;
        id
    }
}

//! Shared domain types: descriptors, lifecycle state machines, actuators
//! and alarms.

mod cidr;
mod descriptor;
mod lifecycle;

pub use cidr::{CidrParseError, Ipv4Cidr};
pub use descriptor::{
    validate_descriptor, ActuatorBinding, DescriptorFormatError, Flavor, NetworkRole, NetworkSpec,
    NsDescriptor, Point, RadioRequirements, ValidationReport, Violation, VnfDescriptor, VnfRole,
};
pub use lifecycle::{
    Actuator, ActuatorAction, Alarm, IllegalTransition, NetworkService, NsState, StateEvent,
    VnfInstance, VnfState,
};

//! Commute trip sharing with autonomous vehicles: instance model, route
//! feasibility, graphs, pricing, and the two column-generation procedures.

pub mod analytics;
pub mod ctspav;
pub mod darp;
pub mod enumerate;
pub mod feasibility;
pub mod model;
pub mod network;
pub mod plan;
pub mod pricing;
pub mod scenario;

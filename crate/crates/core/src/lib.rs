//! Screening menus of excess-of-loss insurance contracts when the insurer
//! cannot observe either the customer's risk aversion or risk type.

pub mod attitude;
pub mod audit;
pub mod dist;
pub mod error;
pub mod market;
pub mod numerics;
pub mod screening;
pub mod sim;

pub use error::{Error, Result};
pub use market::{Contract, ContractMenu, MarketParams, MenuIndex};
pub use numerics::SolverConfig;

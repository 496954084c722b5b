pub mod episode;
pub mod metrics;
pub mod report;
pub mod scenarios;

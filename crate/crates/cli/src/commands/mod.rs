pub mod data;
pub mod design;
pub mod report;
pub mod train;

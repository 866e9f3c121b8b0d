pub mod bias;
pub mod estimate;
pub mod experiment;
pub mod fit;
pub mod mobility;
pub mod simulate;

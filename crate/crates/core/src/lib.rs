pub mod astmark;
pub mod detector;
pub mod hash;
pub mod lexicon;
pub mod marker;
pub mod metrics;
pub mod model;
pub mod nulldist;
pub mod sim;

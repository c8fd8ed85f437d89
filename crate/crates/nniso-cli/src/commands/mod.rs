pub mod gradcheck;
pub mod posttrain;
pub mod scratch;
pub mod train;
pub mod transform;
pub mod verify;

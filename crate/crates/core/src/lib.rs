pub mod geom;
pub mod gp;
pub mod lp;
pub mod wrapper;
pub mod lifted;
pub mod plant;

pub mod cli;
pub mod fields;
pub mod graphmin;
pub mod induced;
pub mod io;
pub mod majorization;
pub mod mesh;
pub mod metric;
pub mod pipeline;
pub mod saddle;
pub mod shortest;
pub mod surface;
pub mod svg;
pub mod target;
pub mod unionfind;

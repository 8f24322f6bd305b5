pub mod evaluate;
pub mod fit;
pub mod mesh_info;
pub mod simulate;

pub mod characteristics;
pub mod fit;
pub mod geometry;
pub mod grid;
pub mod lpscan;
pub mod measure;
pub mod propagator;
pub mod spectral;
pub mod symdsl;
pub mod systems;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/symbols.md")]
    mod symbols {}
    #[doc = include_str!("../../../book/src/characteristics.md")]
    mod characteristics {}
    #[doc = include_str!("../../../book/src/flows.md")]
    mod flows {}
    #[doc = include_str!("../../../book/src/propagator.md")]
    mod propagator {}
    #[doc = include_str!("../../../book/src/measure.md")]
    mod measure {}
    #[doc = include_str!("../../../book/src/spectral.md")]
    mod spectral {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}

//! Inference of box programs from single images.
//!
//! A *box program* couples camera parameters, the 3D layout of the visible
//! box faces (corridor interiors or building exteriors), and a nested-loop
//! lattice describing the repeated pattern on each face. This crate infers
//! such programs from an image plus visual cues (line segments and a
//! vanishing point), and uses them to drive regularity- and
//! perspective-aware inpainting, extrapolation, and view synthesis.
//!
//! Module map:
//! - [`imaging`]: image buffers, bilinear sampling, homography warps.
//! - [`geometry`]: pinhole camera, the rectangle-from-rays solver, plane
//!   reconstruction and rectification homographies.
//! - [`dsl`]: the program representation, its text/JSON forms, and
//!   execution into 2D element coordinates.
//! - [`cues`]: classical line-segment and vanishing-point detection plus
//!   an annotation-file pathway.
//! - [`induction`]: the candidate search that turns cues into a program.
//! - [`patchmatch`]: nearest-neighbor-field inpainting with the lattice
//!   shift-map guidance term.
//! - [`edits`]: program-guided inpainting, extrapolation, view synthesis.
//! - [`synth`]: procedural ground-truth scene generator used as an oracle.
//! - [`metrics`]: IoU mask matching and L1/PSNR/SSIM.

pub mod cues;
pub mod dsl;
pub mod edits;
pub mod geometry;
pub mod imaging;
pub mod induction;
pub mod metrics;
pub mod patchmatch;
pub mod synth;

//! Cavity QED with an intracavity far-off-resonance trap (FORT): atomic
//! structure, AC-Stark shifts, driven-cavity transmission, trapped-atom
//! motion, optical pumping and photon-record analysis.

pub mod angular;
pub mod atoms;
pub mod cavity;
pub mod constants;
pub mod motion;
pub mod pumping;
pub mod records;
pub mod stark;

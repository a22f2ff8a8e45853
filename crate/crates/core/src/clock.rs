//! Wall-clock timer. `std::time::Instant` panics on `wasm32-unknown-unknown`,
//! so timings read as zero there.

#[cfg(not(target_arch = "wasm32"))]
pub(crate) struct Timer(std::time::Instant);

#[cfg(not(target_arch = "wasm32"))]
impl Timer {
    pub(crate) fn start() -> Self {
        Timer(std::time::Instant::now())
    }

    pub(crate) fn seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

#[cfg(target_arch = "wasm32")]
pub(crate) struct Timer;

#[cfg(target_arch = "wasm32")]
impl Timer {
    pub(crate) fn start() -> Self {
        Timer
    }

    pub(crate) fn seconds(&self) -> f64 {
        0.0
    }
}

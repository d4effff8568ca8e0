//! Subnormal handling for the training loop.
//!
//! Adam moments of leaves whose gradient has gone to zero (dead ReLU units)
//! decay geometrically through the subnormal range, and subnormal operands
//! make x86 floating-point arithmetic one to two orders of magnitude slower.
//! While a [`FlushSubnormals`] guard is alive the current thread treats
//! subnormal inputs and results as zero. The previous control word is
//! restored on drop. On other targets the guard does nothing.

pub struct FlushSubnormals {
    #[cfg(target_arch = "x86_64")]
    saved: u32,
}

#[cfg(target_arch = "x86_64")]
impl FlushSubnormals {
    /// Flush-to-zero (bit 15) and denormals-are-zero (bit 6) of MXCSR.
    const FTZ_DAZ: u32 = 0x8040;

    pub fn enable() -> Self {
        let saved = read_mxcsr();
        write_mxcsr(saved | Self::FTZ_DAZ);
        FlushSubnormals { saved }
    }
}

#[cfg(not(target_arch = "x86_64"))]
impl FlushSubnormals {
    pub fn enable() -> Self {
        FlushSubnormals {}
    }
}

impl Drop for FlushSubnormals {
    fn drop(&mut self) {
        #[cfg(target_arch = "x86_64")]
        write_mxcsr(self.saved);
    }
}

#[cfg(target_arch = "x86_64")]
fn read_mxcsr() -> u32 {
    let mut word = 0u32;
    // SAFETY: stores the SSE control/status register into a local.
    unsafe { std::arch::asm!("stmxcsr [{}]", in(reg) &mut word, options(nostack, preserves_flags)) };
    word
}

#[cfg(target_arch = "x86_64")]
fn write_mxcsr(word: u32) {
    // SAFETY: loads a control word derived from the current one; only the
    // rounding of subnormals changes.
    unsafe { std::arch::asm!("ldmxcsr [{}]", in(reg) &word, options(nostack, readonly, preserves_flags)) };
}

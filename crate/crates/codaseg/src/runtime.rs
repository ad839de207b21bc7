//! Process-wide runtime knobs.

use std::sync::Once;

static INIT: Once = Once::new();

/// Installs the global worker pool, honoring the `CODASEG_THREADS` cap.
/// Safe to call more than once; only the first call has an effect. All
/// parallel sections partition work into disjoint output ranges, so the
/// thread count never changes numeric results.
pub fn configure_threads() {
    INIT.call_once(|| {
        if let Ok(v) = std::env::var("CODASEG_THREADS") {
            if let Ok(n) = v.trim().parse::<usize>() {
                if n >= 1 {
                    // Ignore failure: a pool may already exist in tests.
                    let _ = rayon::ThreadPoolBuilder::new()
                        .num_threads(n)
                        .build_global();
                }
            }
        }
    });
}

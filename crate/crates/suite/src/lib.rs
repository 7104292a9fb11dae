//! Reporting helpers for the acceptance criteria in `tests/acceptance.rs`.

use std::io::Write;
use std::sync::{Mutex, MutexGuard};

static SERIAL: Mutex<()> = Mutex::new(());

/// Serializes criteria so timing measurements do not overlap.
pub fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

/// Writes one `[PASS]`/`[FAIL]` line straight to stderr, bypassing the test
/// harness capture, and panics on failure.
pub fn report(criterion: u32, title: &str, ok: bool, detail: &str) {
    let line = format!(
        "[{}] criterion {criterion}: {title} ({detail})\n",
        if ok { "PASS" } else { "FAIL" }
    );
    let mut err = std::io::stderr().lock();
    let _ = err.write_all(line.as_bytes());
    let _ = err.flush();
    assert!(ok, "criterion {criterion} failed: {detail}");
}

//! Shared helpers for unit tests.

use crate::adapters::{RuntimeKind, ServerCounters, TokenEvent};
use crate::bench::{RunRecord, RunStatus};

/// A clean run with exact timing: `ttft_s` to first token, then `rate`
/// tokens per second.
pub fn synthetic_run(device: &str, model: &str, ttft_s: f64, rate: f64, tokens: u64) -> RunRecord {
    let submit = 1_000_000_000u64;
    let first = submit + (ttft_s * 1e9) as u64;
    let gap = (1e9 / rate) as u64;
    let mut events = Vec::new();
    for k in 0..tokens {
        events.push(TokenEvent {
            recv_monotonic_ns: first + k * gap,
            text_fragment: format!("tok{k}"),
            is_final: false,
            server_reported: None,
        });
    }
    let last = first + (tokens - 1) * gap;
    events.push(TokenEvent {
        recv_monotonic_ns: last,
        text_fragment: String::new(),
        is_final: true,
        server_reported: Some(ServerCounters {
            eval_count: tokens,
            eval_duration_ns: (tokens - 1) * gap,
        }),
    });
    RunRecord {
        device_id: device.into(),
        model_id: model.into(),
        runtime_kind: RuntimeKind::Mock,
        submit_monotonic_ns: submit,
        first_token_ns: first,
        last_token_ns: last,
        wall_start_utc_ms: 1_700_000_000_000,
        token_count: tokens,
        events,
        status: RunStatus::Ok,
    }
}

//! Frame-protocol server that exposes a local registry to remote clients.
//!
//! One thread per connection; each connection handles any number of
//! sequential requests. Tool-level failures (validation rejections, executor
//! faults) are reported inside a normal result payload so that remote and
//! in-process invocation see identical outcomes; error frames are reserved
//! for protocol violations.

use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::Arc;
use std::thread;

use crate::toolhost::{validate_arguments, Registry, Validation};
use crate::trace::ErrorClass;

use super::wire::{
    self, codes, read_frame, write_frame, CallParams, Request, Response, ToolListing,
    WireToolResult,
};

/// Serves `registry` on `listener` until the listener fails. Each accepted
/// connection gets its own thread.
pub fn serve(listener: TcpListener, registry: Arc<Registry>) -> io::Result<()> {
    loop {
        let (stream, _) = listener.accept()?;
        let registry = Arc::clone(&registry);
        thread::spawn(move || handle_connection(stream, &registry));
    }
}

/// Binds an ephemeral local port and serves in a background thread. The
/// thread runs for the life of the process; tests address the returned
/// socket.
pub fn spawn_server(registry: Arc<Registry>) -> io::Result<SocketAddr> {
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    thread::spawn(move || {
        let _ = serve(listener, registry);
    });
    Ok(addr)
}

fn handle_connection(mut stream: TcpStream, registry: &Registry) {
    loop {
        let payload = match read_frame(&mut stream) {
            Ok(p) => p,
            // Peer hung up or sent garbage lengths; either way this
            // connection is done.
            Err(_) => return,
        };
        let response = match serde_json::from_slice::<Request>(&payload) {
            Ok(request) => handle_request(request, registry),
            Err(e) => Response::fail(
                0,
                codes::PARSE_ERROR,
                format!("unparseable request frame: {e}"),
                ErrorClass::ProviderError,
            ),
        };
        let bytes = serde_json::to_vec(&response).expect("response serialization cannot fail");
        if write_frame(&mut stream, &bytes).is_err() {
            return;
        }
    }
}

fn handle_request(request: Request, registry: &Registry) -> Response {
    match request.method.as_str() {
        wire::METHOD_LIST => {
            let listing = ToolListing {
                tools: registry.schemas(),
            };
            Response::ok(
                request.id,
                serde_json::to_value(listing).expect("listing serialization cannot fail"),
            )
        }
        wire::METHOD_CALL => handle_call(request.id, request.params, registry),
        other => Response::fail(
            request.id,
            codes::METHOD_NOT_FOUND,
            format!("unknown method \"{other}\""),
            ErrorClass::ProviderError,
        ),
    }
}

fn handle_call(id: u64, params: serde_json::Value, registry: &Registry) -> Response {
    let params: CallParams = match serde_json::from_value(params) {
        Ok(p) => p,
        Err(e) => {
            return Response::fail(
                id,
                codes::INVALID_PARAMS,
                format!("bad tools/call params: {e}"),
                ErrorClass::InvalidArguments,
            );
        }
    };
    // Server-side validation mirrors the client path so a hand-rolled client
    // cannot bypass schema checks. Failures are tool-level outcomes.
    let result = match registry.schema(&params.name) {
        None => WireToolResult {
            call_id: params.call_id.clone(),
            status: "error".to_string(),
            class: Some(ErrorClass::ToolNotFound),
            content: format!("no tool named \"{}\"", params.name),
            duration_ms: 0,
            content_tokens: 0,
        },
        Some(schema) => match validate_arguments(schema, &params.arguments) {
            Validation::Rejected { reason } => WireToolResult {
                call_id: params.call_id.clone(),
                status: "error".to_string(),
                class: Some(ErrorClass::InvalidArguments),
                content: reason,
                duration_ms: 0,
                content_tokens: 0,
            },
            Validation::Ok(call) => {
                let call = if params.confirmed {
                    call.with_confirmation()
                } else {
                    call
                };
                // Same dispatch path in-process callers use, so outcomes match
                // across transports.
                let result = registry.execute(&call, &params.call_id);
                WireToolResult::from_result(&result)
            }
        },
    };
    Response::ok(
        id,
        serde_json::to_value(result).expect("result serialization cannot fail"),
    )
}

//! The three networked processes: an inference engine that classifies whole
//! sessions, a gateway that buffers 1 Hz telemetry into sessions and forwards each
//! one exactly once, and a sensor client that streams generated samples.

pub mod error;
pub mod gateway;
pub mod inference;
pub mod sensor;
pub mod wire;

pub use error::ServiceError;
pub use gateway::{Gateway, GatewayConfig, SessionState, Status};
pub use inference::InferenceState;
pub use sensor::{stream, StreamConfig, StreamReport};
pub use wire::{PredictRequest, Reading};

use std::net::SocketAddr;

use axum::Router;
use tokio::net::TcpListener;

/// Binds `addr`, reporting the address in the error when the port is taken.
pub async fn bind(addr: SocketAddr) -> Result<TcpListener, ServiceError> {
    TcpListener::bind(addr)
        .await
        .map_err(|source| ServiceError::Bind { addr, source })
}

/// Serves `app` until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    app: Router,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<(), ServiceError> {
    axum::serve(listener, app)
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(ServiceError::Serve)
}

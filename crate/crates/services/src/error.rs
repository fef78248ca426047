use std::net::SocketAddr;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error("server error: {0}")]
    Serve(std::io::Error),
    #[error("failed to load model: {0}")]
    Model(#[from] riskwatch_core::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("http client: {0}")]
    Http(#[from] reqwest::Error),
}

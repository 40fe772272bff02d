//! Reader emulator: streams a fixed list of encoded frames to every client.

use std::sync::Arc;
use std::time::Duration;

use tokio::io::AsyncWriteExt;
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::watch;
use tokio::task::JoinSet;
use tracing::{debug, info, warn};

/// Serve `frames` (already encoded) to every client that connects to
/// `listener`, one task per session, `interval` apart. Each session gets the
/// full stream in order and is then closed. Returns when `shutdown` flips to
/// `true` or its sender is dropped; open sessions are cancelled.
pub async fn serve(
    listener: TcpListener,
    frames: Arc<Vec<Vec<u8>>>,
    interval: Duration,
    mut shutdown: watch::Receiver<bool>,
) -> std::io::Result<()> {
    let mut sessions = JoinSet::new();
    loop {
        tokio::select! {
            changed = shutdown.changed() => {
                if changed.is_err() || *shutdown.borrow() {
                    break;
                }
            }
            accepted = listener.accept() => {
                let (stream, peer) = accepted?;
                debug!(%peer, "client connected");
                let frames = Arc::clone(&frames);
                let mut stop = shutdown.clone();
                sessions.spawn(async move {
                    tokio::select! {
                        res = stream_frames(stream, &frames, interval) => {
                            if let Err(e) = res {
                                warn!(%peer, error = %e, "session ended with transport error");
                            } else {
                                debug!(%peer, "session complete");
                            }
                        }
                        _ = stop.changed() => {}
                    }
                });
            }
            Some(_) = sessions.join_next(), if !sessions.is_empty() => {}
        }
    }
    info!("server shutting down");
    sessions.shutdown().await;
    Ok(())
}

async fn stream_frames(
    mut stream: TcpStream,
    frames: &[Vec<u8>],
    interval: Duration,
) -> std::io::Result<()> {
    stream.set_nodelay(true)?;
    for (i, frame) in frames.iter().enumerate() {
        if i > 0 && !interval.is_zero() {
            tokio::time::sleep(interval).await;
        }
        stream.write_all(frame).await?;
    }
    stream.shutdown().await
}

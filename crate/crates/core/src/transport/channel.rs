use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::time::{Duration, Instant};

use super::MAX_FRAME_LEN;
use crate::error::{Error, Result};

/// A reliable, ordered byte-frame pipe to the peer. Frames include their
/// 4-byte length header.
pub trait Channel: Send {
    fn send_frame(&mut self, frame: &[u8]) -> Result<()>;
    fn recv_frame(&mut self) -> Result<Vec<u8>>;
}

pub struct InProcChannel {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
}

/// Two connected in-process endpoints.
pub fn in_process_pair() -> (InProcChannel, InProcChannel) {
    let (tx_a, rx_b) = channel();
    let (tx_b, rx_a) = channel();
    (
        InProcChannel { tx: tx_a, rx: rx_a },
        InProcChannel { tx: tx_b, rx: rx_b },
    )
}

impl Channel for InProcChannel {
    fn send_frame(&mut self, frame: &[u8]) -> Result<()> {
        self.tx
            .send(frame.to_vec())
            .map_err(|_| Error::Transport("peer endpoint is closed".into()))
    }

    fn recv_frame(&mut self) -> Result<Vec<u8>> {
        self.rx
            .recv()
            .map_err(|_| Error::Transport("peer disconnected".into()))
    }
}

pub struct TcpChannel {
    stream: TcpStream,
}

impl TcpChannel {
    pub fn new(stream: TcpStream) -> Result<Self> {
        stream.set_nodelay(true)?;
        Ok(Self { stream })
    }
}

impl Channel for TcpChannel {
    fn send_frame(&mut self, frame: &[u8]) -> Result<()> {
        self.stream.write_all(frame)?;
        self.stream.flush()?;
        Ok(())
    }

    fn recv_frame(&mut self) -> Result<Vec<u8>> {
        let mut header = [0u8; 4];
        self.stream
            .read_exact(&mut header)
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::UnexpectedEof => Error::Transport("peer disconnected".into()),
                _ => e.into(),
            })?;
        let len = u32::from_be_bytes(header) as usize;
        if len > MAX_FRAME_LEN {
            return Err(Error::Transport(format!(
                "incoming frame of {len} bytes is too large"
            )));
        }
        let mut frame = vec![0u8; len + 4];
        frame[..4].copy_from_slice(&header);
        self.stream.read_exact(&mut frame[4..])?;
        Ok(frame)
    }
}

/// Binds `addr` and accepts exactly one peer.
pub fn listen<A: ToSocketAddrs>(addr: A) -> Result<TcpChannel> {
    let listener = TcpListener::bind(addr)?;
    log::info!("listening on {}", listener.local_addr()?);
    let (stream, peer) = listener.accept()?;
    log::info!("accepted peer {peer}");
    TcpChannel::new(stream)
}

/// Two ends of a TCP connection over the loopback interface.
pub fn tcp_loopback_pair() -> Result<(TcpChannel, TcpChannel)> {
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let client = TcpStream::connect(listener.local_addr()?)?;
    let (server, _) = listener.accept()?;
    Ok((TcpChannel::new(server)?, TcpChannel::new(client)?))
}

pub fn connect<A: ToSocketAddrs>(addr: A) -> Result<TcpChannel> {
    TcpChannel::new(TcpStream::connect(addr)?)
}

/// Connects, retrying refused connections until `timeout` elapses. Lets the
/// two roles be started in either order.
pub fn connect_with_retry<A: ToSocketAddrs + Clone>(
    addr: A,
    timeout: Duration,
) -> Result<TcpChannel> {
    let deadline = Instant::now() + timeout;
    loop {
        match TcpStream::connect(addr.clone()) {
            Ok(stream) => return TcpChannel::new(stream),
            Err(e) if Instant::now() < deadline => {
                log::debug!("connect failed ({e}), retrying");
                std::thread::sleep(Duration::from_millis(100));
            }
            Err(e) => return Err(e.into()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tcp_frames_roundtrip() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = std::thread::spawn(move || {
            let mut ch = TcpChannel::new(listener.accept().unwrap().0).unwrap();
            let f = ch.recv_frame().unwrap();
            ch.send_frame(&f).unwrap();
        });
        let mut client = connect(addr).unwrap();
        let frame = [0u8, 0, 0, 3, b'a', b'b', b'c'];
        client.send_frame(&frame).unwrap();
        assert_eq!(client.recv_frame().unwrap(), frame);
        server.join().unwrap();
        assert!(matches!(client.recv_frame(), Err(Error::Transport(_))));
    }

    #[test]
    fn oversized_header_is_refused() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = std::thread::spawn(move || {
            let mut s = listener.accept().unwrap().0;
            s.write_all(&u32::MAX.to_be_bytes()).unwrap();
        });
        let mut client = connect(addr).unwrap();
        assert!(client.recv_frame().is_err());
        server.join().unwrap();
    }
}

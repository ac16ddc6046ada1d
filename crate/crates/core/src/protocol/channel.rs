//! Byte transports and framed, transcript-recording endpoints.

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::{Arc, Mutex};

use super::frame::{Frame, Message, MessageKind, FRAME_HEADER_LEN};
use super::transcript::{Direction, Stage, Transcript};
use super::ProtocolError;

/// Moves whole encoded frames between two parties.
pub trait Transport: Send {
    fn send_bytes(&mut self, frame: Vec<u8>) -> Result<(), ProtocolError>;
    fn recv_bytes(&mut self) -> Result<Vec<u8>, ProtocolError>;
}

/// In-process duplex channel.
#[derive(Debug)]
pub struct MemoryTransport {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
}

pub fn memory_pair() -> (MemoryTransport, MemoryTransport) {
    let (a_tx, b_rx) = channel();
    let (b_tx, a_rx) = channel();
    (MemoryTransport { tx: a_tx, rx: a_rx }, MemoryTransport { tx: b_tx, rx: b_rx })
}

impl Transport for MemoryTransport {
    fn send_bytes(&mut self, frame: Vec<u8>) -> Result<(), ProtocolError> {
        self.tx.send(frame).map_err(|_| ProtocolError::ChannelClosed)
    }

    fn recv_bytes(&mut self) -> Result<Vec<u8>, ProtocolError> {
        self.rx.recv().map_err(|_| ProtocolError::ChannelClosed)
    }
}

/// Framing over any byte stream, e.g. a loopback TCP socket.
#[derive(Debug)]
pub struct StreamTransport<S> {
    stream: S,
}

impl<S: Read + Write + Send> StreamTransport<S> {
    pub fn new(stream: S) -> Self {
        Self { stream }
    }
}

impl<S: Read + Write + Send> Transport for StreamTransport<S> {
    fn send_bytes(&mut self, frame: Vec<u8>) -> Result<(), ProtocolError> {
        self.stream.write_all(&frame)?;
        self.stream.flush()?;
        Ok(())
    }

    fn recv_bytes(&mut self) -> Result<Vec<u8>, ProtocolError> {
        let mut header = [0u8; FRAME_HEADER_LEN];
        self.stream.read_exact(&mut header)?;
        let (len, _, _) = Frame::decode_header(&header)?;
        let mut out = header.to_vec();
        out.resize(FRAME_HEADER_LEN + len, 0);
        self.stream.read_exact(&mut out[FRAME_HEADER_LEN..])?;
        Ok(out)
    }
}

/// Connected client and server sockets on 127.0.0.1.
pub fn tcp_loopback_pair() -> Result<(StreamTransport<TcpStream>, StreamTransport<TcpStream>), ProtocolError> {
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    let client = TcpStream::connect(addr)?;
    let (server, _) = listener.accept()?;
    client.set_nodelay(true)?;
    server.set_nodelay(true)?;
    Ok((StreamTransport::new(client), StreamTransport::new(server)))
}

/// One party's end: assigns sequence numbers, checks them on receipt and
/// logs every sent frame to the shared transcript.
pub struct Endpoint<T> {
    transport: T,
    direction: Direction,
    send_seq: u32,
    recv_seq: u32,
    stage: Stage,
    transcript: Arc<Mutex<Transcript>>,
}

impl<T: Transport> Endpoint<T> {
    /// `direction` is the direction of messages this endpoint sends.
    pub fn new(transport: T, direction: Direction, transcript: Arc<Mutex<Transcript>>) -> Self {
        Self {
            transport,
            direction,
            send_seq: 0,
            recv_seq: 0,
            stage: Stage::Online,
            transcript,
        }
    }

    pub fn set_stage(&mut self, stage: Stage) {
        self.stage = stage;
    }

    pub fn send(&mut self, msg: Message) -> Result<(), ProtocolError> {
        let frame = Frame {
            kind: msg.kind,
            seq: self.send_seq,
            payload: msg.payload,
        };
        self.transcript
            .lock()
            .expect("transcript lock")
            .record(frame.seq, self.direction, frame.kind, self.stage, frame.payload.len());
        self.send_seq += 1;
        self.transport.send_bytes(frame.encode())
    }

    pub fn send_all(&mut self, msgs: Vec<Message>) -> Result<(), ProtocolError> {
        msgs.into_iter().try_for_each(|m| self.send(m))
    }

    pub fn recv(&mut self) -> Result<Message, ProtocolError> {
        let frame = Frame::decode(&self.transport.recv_bytes()?)?;
        if frame.seq != self.recv_seq {
            return Err(ProtocolError::CorruptFrame(format!(
                "sequence number {} where {} was expected",
                frame.seq, self.recv_seq
            )));
        }
        self.recv_seq += 1;
        Ok(Message::new(frame.kind, frame.payload))
    }

    pub fn recv_kind(&mut self, kind: MessageKind) -> Result<Message, ProtocolError> {
        let msg = self.recv()?;
        if msg.kind != kind {
            return Err(ProtocolError::CorruptFrame(format!("expected {kind:?}, got {:?}", msg.kind)));
        }
        Ok(msg)
    }

    pub fn recv_many(&mut self, kind: MessageKind, count: usize) -> Result<Vec<Message>, ProtocolError> {
        (0..count).map(|_| self.recv_kind(kind)).collect()
    }
}

use super::CongestionController;

/// Receiver-advertised window and the sender's outstanding byte count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowWindow {
    pub recv_window: u64,
    bytes_in_flight: u64,
}

impl FlowWindow {
    pub fn new(recv_window: u64) -> Self {
        FlowWindow {
            recv_window,
            bytes_in_flight: 0,
        }
    }

    pub fn bytes_in_flight(&self) -> u64 {
        self.bytes_in_flight
    }

    pub fn set_in_flight(&mut self, bytes: u64) {
        self.bytes_in_flight = bytes;
    }

    pub fn on_sent(&mut self, bytes: u64) {
        self.bytes_in_flight += bytes;
    }

    pub fn on_removed(&mut self, bytes: u64) {
        self.bytes_in_flight = self
            .bytes_in_flight
            .checked_sub(bytes)
            .expect("removed more bytes than were in flight");
    }
}

/// Bytes the sender may still put on the wire.
pub fn can_send(cc: &CongestionController, fw: &FlowWindow) -> u64 {
    cc.cwnd().min(fw.recv_window).saturating_sub(fw.bytes_in_flight)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cc(cwnd: u64) -> CongestionController {
        CongestionController::with_state(1200, 1 << 20, cwnd, u64::MAX)
    }

    fn fw(rwnd: u64, in_flight: u64) -> FlowWindow {
        let mut fw = FlowWindow::new(rwnd);
        fw.on_sent(in_flight);
        fw
    }

    #[test]
    fn window_exhausted() {
        assert_eq!(can_send(&cc(10_000), &fw(8_000, 8_000)), 0);
    }

    #[test]
    fn congestion_window_limits() {
        assert_eq!(can_send(&cc(10_000), &fw(1 << 20, 0)), 10_000);
    }

    #[test]
    fn receive_window_limits() {
        assert_eq!(can_send(&cc(10_000), &fw(8_000, 5_000)), 3_000);
    }

    #[test]
    fn over_commit_saturates_at_zero() {
        assert_eq!(can_send(&cc(10_000), &fw(1 << 20, 20_000)), 0);
    }

    #[test]
    #[should_panic(expected = "more bytes")]
    fn removing_too_much_panics() {
        fw(100, 10).on_removed(11);
    }
}

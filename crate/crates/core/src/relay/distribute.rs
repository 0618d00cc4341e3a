//! Per-node satellite assignment and message distribution.
//!
//! The distributor is the single owner of assignment knowledge: each
//! ATX node receives only the per-satellite payloads for its assigned
//! PRNs, while synchronization and state messages are broadcast.
//! Reassignments activate at a TOW boundary, so messages are routed by
//! the table in force at their own TOW.

use super::envelope::{MsgType, RelayMessage};
use super::stream::{MessageStream, StreamItem};
use super::RelayError;
use std::collections::{BTreeMap, BTreeSet};

/// node id -> assigned PRNs, active from `epoch_tow_ms`. PRN sets may
/// overlap between nodes (colluding overlap is allowed).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssignmentTable {
    pub epoch_tow_ms: u64,
    pub map: BTreeMap<u16, BTreeSet<u8>>,
}

impl AssignmentTable {
    pub fn new(epoch_tow_ms: u64, map: BTreeMap<u16, BTreeSet<u8>>) -> Self {
        Self { epoch_tow_ms, map }
    }

    pub fn nodes_for(&self, prn: u8) -> impl Iterator<Item = u16> + '_ {
        self.map
            .iter()
            .filter(move |(_, prns)| prns.contains(&prn))
            .map(|(&node, _)| node)
    }
}

/// Validate a table change: the new table takes effect for messages at
/// or after its epoch; messages before the boundary follow the old one.
pub fn reassign(
    current: &AssignmentTable,
    new: AssignmentTable,
) -> Result<AssignmentTable, RelayError> {
    if new.epoch_tow_ms <= current.epoch_tow_ms {
        return Err(RelayError::NonMonotoneEpoch {
            current: current.epoch_tow_ms,
            new: new.epoch_tow_ms,
        });
    }
    Ok(new)
}

/// Push-based distributor with central assignment knowledge.
#[derive(Debug, Clone)]
pub struct Distributor {
    known_nodes: BTreeSet<u16>,
    /// Assignment schedule, epochs strictly increasing.
    schedule: Vec<AssignmentTable>,
    drop_count: u64,
}

impl Distributor {
    pub fn new(known_nodes: BTreeSet<u16>, initial: AssignmentTable) -> Result<Self, RelayError> {
        Self::check_nodes(&known_nodes, &initial)?;
        Ok(Self { known_nodes, schedule: vec![initial], drop_count: 0 })
    }

    fn check_nodes(known: &BTreeSet<u16>, table: &AssignmentTable) -> Result<(), RelayError> {
        for node in table.map.keys() {
            if !known.contains(node) {
                return Err(RelayError::UnknownNode(*node));
            }
        }
        Ok(())
    }

    /// Schedule a runtime reassignment.
    pub fn reassign(&mut self, new: AssignmentTable) -> Result<(), RelayError> {
        Self::check_nodes(&self.known_nodes, &new)?;
        let current = self.schedule.last().expect("non-empty schedule");
        let validated = reassign(current, new)?;
        self.schedule.push(validated);
        Ok(())
    }

    /// The table in force at a TOW.
    pub fn active_table(&self, tow_ms: u64) -> &AssignmentTable {
        self.schedule
            .iter()
            .rev()
            .find(|t| t.epoch_tow_ms <= tow_ms)
            .unwrap_or(&self.schedule[0])
    }

    /// Payloads dropped because no node was assigned their PRN.
    pub fn drop_count(&self) -> u64 {
        self.drop_count
    }

    /// Route one message: per-satellite payloads go to the nodes
    /// assigned that PRN, everything else is broadcast.
    fn route(&mut self, item: &StreamItem) -> Vec<u16> {
        let broadcast = matches!(
            item.message.msg_type(),
            MsgType::TowSync | MsgType::PvtState | MsgType::Assignment | MsgType::Heartbeat
                | MsgType::IqChunk
        );
        match (broadcast, item.message.prn()) {
            (true, _) | (false, None) => self.known_nodes.iter().copied().collect(),
            (false, Some(prn)) => {
                let nodes: Vec<u16> = self.active_table(item.tow_ms).nodes_for(prn).collect();
                if nodes.is_empty() {
                    self.drop_count += 1;
                }
                nodes
            }
        }
    }

    /// Split an assembled stream into per-node streams.
    pub fn distribute(
        &mut self,
        stream: &MessageStream,
    ) -> Result<BTreeMap<u16, MessageStream>, RelayError> {
        let mut out: BTreeMap<u16, MessageStream> = self
            .known_nodes
            .iter()
            .map(|&n| (n, MessageStream::new()))
            .collect();
        for item in &stream.items {
            if let RelayMessage::Assignment(table) = &item.message {
                // Assignment messages flowing through the stream also
                // update the schedule (idempotent for duplicates).
                if self
                    .schedule
                    .last()
                    .map(|t| table.epoch_tow_ms > t.epoch_tow_ms)
                    .unwrap_or(true)
                {
                    self.reassign(table.clone())?;
                }
            }
            for node in self.route(item) {
                out.get_mut(&node)
                    .expect("route returns known nodes")
                    .push(item.clone())?;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(epoch: u64, entries: &[(u16, &[u8])]) -> AssignmentTable {
        AssignmentTable::new(
            epoch,
            entries
                .iter()
                .map(|(n, prns)| (*n, prns.iter().copied().collect()))
                .collect(),
        )
    }

    fn sat_params(tow: u64, prn: u8) -> StreamItem {
        StreamItem {
            tow_ms: tow,
            message: RelayMessage::SatParams {
                tow_ms: tow,
                prn,
                doppler_hz: 100.0,
                code_phase_chips: 10.0,
                cn0_dbhz: 45.0,
                pseudorange_m: 2.1e7,
                carrier_phase_rad: 0.0,
            },
        }
    }

    fn pvt(tow: u64) -> StreamItem {
        StreamItem {
            tow_ms: tow,
            message: RelayMessage::PvtState {
                tow_ms: tow,
                position_ecef: [0.0; 3],
                velocity_ecef: [0.0; 3],
                clock_bias_s: 0.0,
                residual_rms_m: 0.0,
                fix_valid: true,
            },
        }
    }

    fn nodes(ids: &[u16]) -> BTreeSet<u16> {
        ids.iter().copied().collect()
    }

    #[test]
    fn per_satellite_payloads_follow_assignment() {
        let mut d =
            Distributor::new(nodes(&[1, 2]), table(0, &[(1, &[1, 2]), (2, &[3])])).unwrap();
        let stream = MessageStream { items: vec![sat_params(10, 2)] };
        let out = d.distribute(&stream).unwrap();
        assert_eq!(out[&1].len(), 1);
        assert_eq!(out[&2].len(), 0);
        assert_eq!(d.drop_count(), 0);
    }

    #[test]
    fn broadcast_types_reach_all_nodes() {
        let mut d =
            Distributor::new(nodes(&[1, 2]), table(0, &[(1, &[1, 2]), (2, &[3])])).unwrap();
        let stream = MessageStream { items: vec![pvt(10)] };
        let out = d.distribute(&stream).unwrap();
        assert_eq!(out[&1].len(), 1);
        assert_eq!(out[&2].len(), 1);
    }

    #[test]
    fn unassigned_prn_dropped_and_counted() {
        let mut d =
            Distributor::new(nodes(&[1, 2]), table(0, &[(1, &[1, 2]), (2, &[3])])).unwrap();
        let stream = MessageStream { items: vec![sat_params(10, 7)] };
        let out = d.distribute(&stream).unwrap();
        assert!(out.values().all(|s| s.is_empty()));
        assert_eq!(d.drop_count(), 1);
    }

    #[test]
    fn unknown_node_rejected() {
        assert!(matches!(
            Distributor::new(nodes(&[1]), table(0, &[(9, &[1])])),
            Err(RelayError::UnknownNode(9))
        ));
    }

    #[test]
    fn reassignment_takes_effect_at_boundary() {
        let mut d = Distributor::new(
            nodes(&[1, 2]),
            table(0, &[(1, &[1, 2]), (2, &[3])]),
        )
        .unwrap();
        d.reassign(table(1000, &[(1, &[1, 2, 3]), (2, &[])])).unwrap();
        let stream = MessageStream { items: vec![sat_params(999, 3), sat_params(1000, 3)] };
        let out = d.distribute(&stream).unwrap();
        assert_eq!(out[&2].len(), 1, "before boundary routes to old owner");
        assert_eq!(out[&2].items[0].tow_ms, 999);
        assert_eq!(out[&1].len(), 1, "at boundary routes to new owner");
        assert_eq!(out[&1].items[0].tow_ms, 1000);
    }

    #[test]
    fn identical_tables_change_nothing() {
        let t = table(0, &[(1, &[4]), (2, &[5])]);
        let mut d1 = Distributor::new(nodes(&[1, 2]), t.clone()).unwrap();
        let mut d2 = Distributor::new(nodes(&[1, 2]), t.clone()).unwrap();
        d2.reassign(AssignmentTable { epoch_tow_ms: 500, ..t }).unwrap();
        let stream = MessageStream { items: vec![sat_params(400, 4), sat_params(600, 5)] };
        assert_eq!(d1.distribute(&stream).unwrap(), d2.distribute(&stream).unwrap());
    }

    #[test]
    fn non_monotone_epoch_rejected() {
        let current = table(100, &[(1, &[1])]);
        assert!(matches!(
            reassign(&current, table(100, &[(1, &[1])])),
            Err(RelayError::NonMonotoneEpoch { .. })
        ));
    }
}

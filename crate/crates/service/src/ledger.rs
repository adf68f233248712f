use std::collections::{BTreeSet, HashMap};

use chrono::{DateTime, Utc};

use vte_core::qc::{AnnotationRecord, ANNOTATIONS_PER_PAIR};
use vte_core::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reservation {
    pub worker_id: String,
    pub pairs: Vec<String>,
    pub expires_at: DateTime<Utc>,
}

/// Who has been given which pair.
///
/// A pair's load is its stored records plus its live reservations and never
/// exceeds three. Once a worker has been assigned a pair they are never
/// assigned it again, even after their reservation lapses.
#[derive(Debug, Clone, Default)]
pub struct AssignmentLedger {
    assigned: HashMap<String, BTreeSet<String>>,
    completed: HashMap<String, usize>,
    reserved: HashMap<String, usize>,
    reservations: HashMap<String, Reservation>,
}

impl AssignmentLedger {
    /// Rebuilds the ledger from a record log.
    pub fn from_records(records: &[AnnotationRecord]) -> Result<Self> {
        let mut ledger = AssignmentLedger::default();
        for r in records {
            if !ledger.assigned.entry(r.pair_id.clone()).or_default().insert(r.worker_id.clone()) {
                return Err(Error::Integrity(format!(
                    "record log holds two records of {} by {}",
                    r.pair_id, r.worker_id
                )));
            }
            let done = ledger.completed.entry(r.pair_id.clone()).or_default();
            *done += 1;
            if *done > ANNOTATIONS_PER_PAIR {
                return Err(Error::Integrity(format!("record log holds more than three records of {}", r.pair_id)));
            }
        }
        Ok(ledger)
    }

    pub fn load(&self, pair_id: &str) -> usize {
        self.completed.get(pair_id).copied().unwrap_or(0) + self.reserved.get(pair_id).copied().unwrap_or(0)
    }

    pub fn completed(&self, pair_id: &str) -> usize {
        self.completed.get(pair_id).copied().unwrap_or(0)
    }

    pub fn was_assigned(&self, pair_id: &str, worker_id: &str) -> bool {
        self.assigned.get(pair_id).is_some_and(|w| w.contains(worker_id))
    }

    pub fn is_eligible(&self, pair_id: &str, worker_id: &str) -> bool {
        self.load(pair_id) < ANNOTATIONS_PER_PAIR && !self.was_assigned(pair_id, worker_id)
    }

    pub fn reservation(&self, batch_id: &str) -> Option<&Reservation> {
        self.reservations.get(batch_id)
    }

    pub fn reserve(&mut self, batch_id: &str, reservation: Reservation) -> Result<()> {
        if self.reservations.contains_key(batch_id) {
            return Err(Error::Integrity(format!("batch {batch_id} already holds a reservation")));
        }
        if let Some(p) = reservation.pairs.iter().find(|p| !self.is_eligible(p, &reservation.worker_id)) {
            return Err(Error::Integrity(format!("pair {p} cannot be reserved for {}", reservation.worker_id)));
        }
        for p in &reservation.pairs {
            self.assigned.entry(p.clone()).or_default().insert(reservation.worker_id.clone());
            *self.reserved.entry(p.clone()).or_default() += 1;
        }
        self.reservations.insert(batch_id.to_string(), reservation);
        Ok(())
    }

    fn unreserve(&mut self, r: &Reservation) {
        for p in &r.pairs {
            if let Some(n) = self.reserved.get_mut(p) {
                *n -= 1;
                if *n == 0 {
                    self.reserved.remove(p);
                }
            }
        }
    }

    /// Turns a reservation into completed assignments.
    pub fn complete(&mut self, batch_id: &str) -> Result<Reservation> {
        let r = self
            .reservations
            .remove(batch_id)
            .ok_or_else(|| Error::NotFound(format!("no reservation for batch {batch_id}")))?;
        self.unreserve(&r);
        for p in &r.pairs {
            *self.completed.entry(p.clone()).or_default() += 1;
        }
        Ok(r)
    }

    /// Drops every reservation whose deadline has passed and returns the
    /// affected batch ids. Released pairs go back to the queue for other
    /// workers.
    pub fn expire(&mut self, now: DateTime<Utc>) -> Vec<String> {
        let mut gone: Vec<String> = self
            .reservations
            .iter()
            .filter(|(_, r)| r.expires_at <= now)
            .map(|(b, _)| b.clone())
            .collect();
        gone.sort();
        for b in &gone {
            let r = self.reservations.remove(b).expect("listed above");
            self.unreserve(&r);
        }
        gone
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{Duration, TimeZone};

    fn t0() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2022, 1, 1, 0, 0, 0).unwrap()
    }

    fn res(worker: &str, pairs: &[&str]) -> Reservation {
        Reservation {
            worker_id: worker.into(),
            pairs: pairs.iter().map(|p| p.to_string()).collect(),
            expires_at: t0() + Duration::minutes(60),
        }
    }

    #[test]
    fn cap_of_three_counts_reservations() {
        let mut l = AssignmentLedger::default();
        for (b, w) in [("b1", "a"), ("b2", "b"), ("b3", "c")] {
            l.reserve(b, res(w, &["p"])).unwrap();
        }
        assert!(!l.is_eligible("p", "d"));
        assert!(l.reserve("b4", res("d", &["p"])).is_err());
        l.complete("b1").unwrap();
        assert_eq!(l.load("p"), 3);
        assert_eq!(l.completed("p"), 1);
    }

    #[test]
    fn expiry_frees_capacity_but_not_the_same_worker() {
        let mut l = AssignmentLedger::default();
        l.reserve("b1", res("a", &["p", "q"])).unwrap();
        assert!(l.expire(t0()).is_empty());
        assert_eq!(l.expire(t0() + Duration::minutes(60)), vec!["b1".to_string()]);
        assert_eq!(l.load("p"), 0);
        assert!(!l.is_eligible("p", "a"));
        assert!(l.is_eligible("p", "b"));
        assert!(l.complete("b1").is_err());
    }
}

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::Imsi;
use crate::engine::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Breakout {
    /// Charged at the PDN gateway.
    Core,
    /// Charged at a local gateway next to the access point.
    Local,
}

impl fmt::Display for Breakout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Breakout::Core => "Core",
            Breakout::Local => "Local",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChargingRecord {
    pub record_id: u64,
    pub imsi: Imsi,
    pub flow_id: String,
    pub start: SimTime,
    pub end: SimTime,
    pub bytes_up: u64,
    pub bytes_down: u64,
    pub rate_id: String,
    pub breakout: Breakout,
}

impl ChargingRecord {
    pub fn total_bytes(&self) -> u64 {
        self.bytes_up + self.bytes_down
    }

    /// `record_id,imsi,flow_id,start_us,end_us,bytes_up,bytes_down,rate_id,breakout`
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.record_id,
            self.imsi,
            self.flow_id,
            self.start.as_micros(),
            self.end.as_micros(),
            self.bytes_up,
            self.bytes_down,
            self.rate_id,
            self.breakout
        )
    }
}

impl FromStr for ChargingRecord {
    type Err = String;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let f: Vec<&str> = line.trim_end().split(',').collect();
        if f.len() != 9 {
            return Err(format!("expected 9 fields, got {}", f.len()));
        }
        let num = |i: usize| f[i].parse::<u64>().map_err(|e| format!("field {i}: {e}"));
        Ok(ChargingRecord {
            record_id: num(0)?,
            imsi: f[1].parse().map_err(|e| format!("{e}"))?,
            flow_id: f[2].to_string(),
            start: SimTime::from_micros(num(3)?),
            end: SimTime::from_micros(num(4)?),
            bytes_up: num(5)?,
            bytes_down: num(6)?,
            rate_id: f[7].to_string(),
            breakout: match f[8] {
                "Core" => Breakout::Core,
                "Local" => Breakout::Local,
                other => return Err(format!("unknown breakout `{other}`")),
            },
        })
    }
}

/// The run's charging log; assigns record ids in arrival order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CdrLog {
    records: Vec<ChargingRecord>,
}

impl CdrLog {
    pub fn append(&mut self, mut record: ChargingRecord) -> u64 {
        let id = self.records.len() as u64 + 1;
        record.record_id = id;
        self.records.push(record);
        id
    }

    pub fn records(&self) -> &[ChargingRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn total_bytes(&self) -> u64 {
        self.records.iter().map(ChargingRecord::total_bytes).sum()
    }

    pub fn bytes_for(&self, imsi: &Imsi, breakout: Breakout) -> u64 {
        self.records
            .iter()
            .filter(|r| &r.imsi == imsi && r.breakout == breakout)
            .map(ChargingRecord::total_bytes)
            .sum()
    }

    /// One record per line, no header.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&r.to_csv_line());
            out.push('\n');
        }
        out
    }
}

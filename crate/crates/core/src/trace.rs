//! Contact traces and profile tables: parsing, filtering, synthesis, output.
//!
//! Trace CSV rows are `a,b,start,end` with times in seconds. Profile CSV rows
//! are `node_id,c1,...,cm`. Attribute rows are `node_id,attr1;attr2;...`.
//! Lines starting with `#` are comments; a leading header row is optional.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};

use rand::Rng;

use crate::error::{Error, Result};
use crate::interest::InterestProfile;
use crate::meeting::{sample_exponential, RateMatrix};

/// Filter threshold for short contacts, in seconds.
pub const DEFAULT_MIN_CONTACT: f64 = 300.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ContactEvent {
    pub a: String,
    pub b: String,
    pub start: f64,
    pub end: f64,
}

impl ContactEvent {
    pub fn new(a: impl Into<String>, b: impl Into<String>, start: f64, end: f64) -> Result<Self> {
        let (a, b) = (a.into(), b.into());
        if a == b {
            return Err(Error::data(format!("self-contact for node '{a}'")));
        }
        if !(start.is_finite() && end.is_finite()) {
            return Err(Error::data("contact times must be finite"));
        }
        if end < start {
            return Err(Error::data(format!("contact {a}-{b} ends ({end}) before it starts ({start})")));
        }
        Ok(Self { a, b, start, end })
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    /// Unordered pair key.
    fn pair(&self) -> (&str, &str) {
        if self.a <= self.b {
            (&self.a, &self.b)
        } else {
            (&self.b, &self.a)
        }
    }
}

/// Contacts sorted by start time, exact duplicates removed.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ContactTrace {
    events: Vec<ContactEvent>,
    node_ids: BTreeSet<String>,
}

impl ContactTrace {
    pub fn new(mut events: Vec<ContactEvent>) -> Self {
        events.sort_by(|x, y| {
            x.start
                .total_cmp(&y.start)
                .then_with(|| x.a.cmp(&y.a))
                .then_with(|| x.b.cmp(&y.b))
                .then_with(|| x.end.total_cmp(&y.end))
        });
        events.dedup();
        let node_ids = events
            .iter()
            .flat_map(|e| [e.a.clone(), e.b.clone()])
            .collect();
        Self { events, node_ids }
    }

    pub fn events(&self) -> &[ContactEvent] {
        &self.events
    }

    pub fn node_ids(&self) -> &BTreeSet<String> {
        &self.node_ids
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

fn data_lines<R: BufRead>(reader: R) -> impl Iterator<Item = Result<(usize, String)>> {
    reader
        .lines()
        .enumerate()
        .map(|(i, l)| l.map(|l| (i + 1, l)).map_err(Error::from))
        .filter(|r| match r {
            Ok((_, l)) => {
                let t = l.trim();
                !t.is_empty() && !t.starts_with('#')
            }
            Err(_) => true,
        })
}

fn parse_f64(field: &str, line: usize, what: &str) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| Error::Parse {
        line,
        message: format!("{what} '{}' is not a number", field.trim()),
    })
}

pub fn parse_trace<R: BufRead>(reader: R) -> Result<ContactTrace> {
    let mut events = Vec::new();
    for (k, item) in data_lines(reader).enumerate() {
        let (line, text) = item?;
        let fields: Vec<&str> = text.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(Error::Parse {
                line,
                message: format!("expected 4 fields 'a,b,start,end', found {}", fields.len()),
            });
        }
        if k == 0 && fields[2].parse::<f64>().is_err() && fields[3].parse::<f64>().is_err() {
            continue; // header
        }
        let start = parse_f64(fields[2], line, "start")?;
        let end = parse_f64(fields[3], line, "end")?;
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty node id".into(),
            });
        }
        let event = ContactEvent::new(fields[0], fields[1], start, end).map_err(|e| match e {
            Error::Data(m) => Error::Data(format!("line {line}: {m}")),
            other => other,
        })?;
        events.push(event);
    }
    Ok(ContactTrace::new(events))
}

pub fn write_trace<W: Write>(mut w: W, trace: &ContactTrace) -> Result<()> {
    writeln!(w, "a,b,start,end")?;
    for e in &trace.events {
        writeln!(w, "{},{},{},{}", e.a, e.b, e.start, e.end)?;
    }
    Ok(())
}

/// Merges contacts of the same (unordered) pair that overlap or touch.
pub fn merge_overlapping(trace: &ContactTrace) -> ContactTrace {
    let mut by_pair: BTreeMap<(&str, &str), Vec<&ContactEvent>> = BTreeMap::new();
    for e in &trace.events {
        by_pair.entry(e.pair()).or_default().push(e);
    }
    let mut merged = Vec::with_capacity(trace.events.len());
    for (_, group) in by_pair {
        // Already in start order: the trace is sorted.
        let mut current: Option<ContactEvent> = None;
        for e in group {
            match current.as_mut() {
                Some(c) if e.start <= c.end => c.end = c.end.max(e.end),
                _ => {
                    if let Some(c) = current.replace(e.clone()) {
                        merged.push(c);
                    }
                }
            }
        }
        merged.extend(current);
    }
    ContactTrace::new(merged)
}

/// Merges overlapping sightings, then keeps contacts lasting at least
/// `min_duration` seconds.
pub fn filter_short_contacts(trace: &ContactTrace, min_duration: f64) -> Result<ContactTrace> {
    if !(min_duration >= 0.0) {
        return Err(Error::argument(format!("min_duration must be >= 0, got {min_duration}")));
    }
    let merged = merge_overlapping(trace);
    Ok(ContactTrace::new(
        merged
            .events
            .into_iter()
            .filter(|e| e.duration() >= min_duration)
            .collect(),
    ))
}

/// Realizes each pair's Poisson meeting process on `[0, horizon]`.
/// Node ids are the matrix indices rendered as decimal text.
pub fn generate_synthetic_trace<R: Rng + ?Sized>(
    rng: &mut R,
    rates: &RateMatrix,
    horizon: f64,
    contact_duration: f64,
) -> Result<ContactTrace> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::argument(format!("horizon must be positive, got {horizon}")));
    }
    if !(contact_duration >= 0.0) {
        return Err(Error::argument(format!(
            "contact duration must be >= 0, got {contact_duration}"
        )));
    }
    let ids: Vec<String> = (0..rates.size()).map(|i| i.to_string()).collect();
    let mut events = Vec::new();
    for (i, j, rate) in rates.pairs() {
        if rate <= 0.0 {
            continue;
        }
        let mut t = sample_exponential(rng, rate);
        while t <= horizon {
            events.push(ContactEvent {
                a: ids[i].clone(),
                b: ids[j].clone(),
                start: t,
                end: t + contact_duration,
            });
            t += sample_exponential(rng, rate);
        }
    }
    Ok(ContactTrace::new(events))
}

/// Node id → interest profile, all in one dimension.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProfileTable {
    profiles: BTreeMap<String, InterestProfile>,
}

impl ProfileTable {
    pub fn new(entries: impl IntoIterator<Item = (String, InterestProfile)>) -> Result<Self> {
        let mut profiles = BTreeMap::new();
        let mut m = None;
        for (id, p) in entries {
            match m {
                None => m = Some(p.dim()),
                Some(m) if m != p.dim() => {
                    return Err(Error::Dimension {
                        expected: m,
                        found: p.dim(),
                    })
                }
                _ => {}
            }
            if profiles.insert(id.clone(), p).is_some() {
                return Err(Error::data(format!("duplicate profile for node '{id}'")));
            }
        }
        Ok(Self { profiles })
    }

    /// Ids `0..len` matching [`generate_synthetic_trace`]'s naming.
    pub fn from_indexed(profiles: &[InterestProfile]) -> Result<Self> {
        Self::new(profiles.iter().enumerate().map(|(i, p)| (i.to_string(), p.clone())))
    }

    pub fn get(&self, id: &str) -> Option<&InterestProfile> {
        self.profiles.get(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &String> {
        self.profiles.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &InterestProfile)> {
        self.profiles.iter()
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn m(&self) -> Option<usize> {
        self.profiles.values().next().map(InterestProfile::dim)
    }
}

/// Rows are normalized to unit norm; negative entries are rejected.
pub fn parse_profiles<R: BufRead>(reader: R) -> Result<ProfileTable> {
    let mut entries = Vec::new();
    for (k, item) in data_lines(reader).enumerate() {
        let (line, text) = item?;
        let fields: Vec<&str> = text.split(',').map(str::trim).collect();
        if fields.len() < 3 {
            return Err(Error::Parse {
                line,
                message: "expected 'node_id,c1,...,cm' with m >= 2".into(),
            });
        }
        if k == 0 && fields[1].parse::<f64>().is_err() {
            continue; // header
        }
        let weights = fields[1..]
            .iter()
            .map(|f| parse_f64(f, line, "coordinate"))
            .collect::<Result<Vec<_>>>()?;
        let profile = InterestProfile::from_weights(weights)
            .map_err(|e| Error::Data(format!("line {line}: {e}")))?;
        entries.push((fields[0].to_string(), profile));
    }
    ProfileTable::new(entries)
}

pub fn write_profiles<W: Write>(mut w: W, table: &ProfileTable) -> Result<()> {
    for (id, p) in table.iter() {
        write!(w, "{id}")?;
        for c in p.coords() {
            write!(w, ",{c}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Parses `node_id,attr1;attr2;...` rows.
pub fn parse_attribute_table<R: BufRead>(reader: R) -> Result<Vec<(String, Vec<String>)>> {
    let mut rows = Vec::new();
    for item in data_lines(reader) {
        let (line, text) = item?;
        let Some((id, attrs)) = text.split_once(',') else {
            return Err(Error::Parse {
                line,
                message: "expected 'node_id,attr1;attr2;...'".into(),
            });
        };
        let attrs = attrs
            .split(';')
            .map(str::trim)
            .filter(|a| !a.is_empty())
            .map(String::from)
            .collect();
        rows.push((id.trim().to_string(), attrs));
    }
    Ok(rows)
}

/// One axis per distinct attribute; a node gets weight 1 on each attribute
/// it holds, then the vector is normalized.
pub fn build_binary_profiles(rows: &[(String, Vec<String>)]) -> Result<ProfileTable> {
    let universe: BTreeSet<&str> = rows
        .iter()
        .flat_map(|(_, attrs)| attrs.iter().map(String::as_str))
        .collect();
    if universe.len() < 2 {
        return Err(Error::config(format!(
            "attribute universe has {} entries; need at least 2 dimensions",
            universe.len()
        )));
    }
    let axis: HashMap<&str, usize> = universe.iter().enumerate().map(|(i, a)| (*a, i)).collect();
    let mut entries = Vec::with_capacity(rows.len());
    for (id, attrs) in rows {
        if attrs.is_empty() {
            return Err(Error::data(format!("node '{id}' has no attributes")));
        }
        let mut w = vec![0.0; universe.len()];
        for a in attrs {
            w[axis[a.as_str()]] = 1.0;
        }
        entries.push((id.clone(), InterestProfile::from_weights(w)?));
    }
    ProfileTable::new(entries)
}

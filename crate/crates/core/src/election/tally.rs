//! Plurality counting over the decrypted mix output.

use std::collections::BTreeMap;

use serde::Serialize;

use super::files::{read_csv, write_csv, FormatError, MixedRow, TALLY};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RaceTally {
    pub race: String,
    pub seats: u32,
    /// Highest count first, then by vote text.
    pub counts: Vec<(String, u64)>,
    pub winners: Vec<String>,
}

impl RaceTally {
    pub fn total(&self) -> u64 {
        self.counts.iter().map(|(_, c)| c).sum()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct TallyResult {
    pub races: Vec<RaceTally>,
}

/// Counts `rows` per race. A race with `s` seats elects every option whose
/// count reaches the `s`-th highest count, so ties widen the winner set
/// rather than being broken.
pub fn count(rows: &[MixedRow], seats: impl Fn(&str) -> u32) -> TallyResult {
    let mut per_race: BTreeMap<&str, BTreeMap<&str, u64>> = BTreeMap::new();
    for r in rows {
        *per_race.entry(&r.race).or_default().entry(&r.vote_text).or_default() += 1;
    }
    let races = per_race
        .into_iter()
        .map(|(race, counts)| {
            let seats = seats(race);
            let mut counts: Vec<(String, u64)> = counts.into_iter().map(|(t, c)| (t.to_string(), c)).collect();
            counts.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            let cutoff = counts
                .get((seats as usize).saturating_sub(1))
                .or(counts.last())
                .map_or(u64::MAX, |(_, c)| *c);
            let winners = if seats == 0 {
                Vec::new()
            } else {
                counts
                    .iter()
                    .filter(|(_, c)| *c >= cutoff)
                    .map(|(t, _)| t.clone())
                    .collect()
            };
            RaceTally {
                race: race.to_string(),
                seats,
                counts,
                winners,
            }
        })
        .collect();
    TallyResult { races }
}

const HEADER: [&str; 5] = ["race", "seats", "vote_text", "count", "winner"];

impl TallyResult {
    pub fn to_csv(&self) -> Vec<u8> {
        write_csv(
            &HEADER,
            self.races.iter().flat_map(|r| {
                r.counts.iter().map(|(text, c)| {
                    [
                        r.race.clone(),
                        r.seats.to_string(),
                        text.clone(),
                        c.to_string(),
                        r.winners.contains(text).to_string(),
                    ]
                })
            }),
        )
    }

    pub fn from_csv(bytes: &[u8]) -> Result<Self, FormatError> {
        let bad = |m: String| FormatError::new(TALLY, m);
        let mut races: Vec<RaceTally> = Vec::new();
        for (i, r) in read_csv(TALLY, bytes, &HEADER)?.iter().enumerate() {
            let seats = r[1].parse().map_err(|_| bad(format!("row {i}: seats")))?;
            let count = r[3].parse().map_err(|_| bad(format!("row {i}: count")))?;
            let winner = match &r[4] {
                "true" => true,
                "false" => false,
                _ => return Err(bad(format!("row {i}: winner"))),
            };
            if races.last().map(|t| t.race.as_str()) != Some(&r[0]) {
                races.push(RaceTally {
                    race: r[0].to_string(),
                    seats,
                    counts: Vec::new(),
                    winners: Vec::new(),
                });
            }
            let race = races.last_mut().expect("pushed above");
            race.counts.push((r[2].to_string(), count));
            if winner {
                race.winners.push(r[2].to_string());
            }
        }
        Ok(Self { races })
    }

    pub fn race(&self, race: &str) -> Option<&RaceTally> {
        self.races.iter().find(|r| r.race == race)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(race: &str, votes: &[&str]) -> Vec<MixedRow> {
        votes
            .iter()
            .enumerate()
            .map(|(i, v)| MixedRow {
                tracker: 10_000_000 + i as u32,
                race: race.to_string(),
                vote_text: v.to_string(),
            })
            .collect()
    }

    #[test]
    fn plurality() {
        let t = count(&rows("r", &["YES", "NO", "YES", "YES"]), |_| 1);
        let r = t.race("r").unwrap();
        assert_eq!(r.counts, vec![("YES".into(), 3), ("NO".into(), 1)]);
        assert_eq!(r.winners, vec!["YES"]);
        assert_eq!(r.total(), 4);
    }

    #[test]
    fn tie_lists_every_leader() {
        let t = count(&rows("r", &["A", "B", "B", "A", "C"]), |_| 1);
        assert_eq!(t.race("r").unwrap().winners, vec!["A", "B"]);
    }

    #[test]
    fn two_seats_take_top_two() {
        let t = count(&rows("board", &["A", "B", "B", "C", "C", "C", "D"]), |_| 2);
        assert_eq!(t.race("board").unwrap().winners, vec!["C", "B"]);
        let tied = count(&rows("board", &["A", "B", "B", "C", "C", "C", "D", "D"]), |_| 2);
        assert_eq!(tied.race("board").unwrap().winners, vec!["C", "B", "D"]);
    }

    #[test]
    fn more_seats_than_options_elects_all() {
        let t = count(&rows("r", &["A", "B"]), |_| 5);
        assert_eq!(t.race("r").unwrap().winners.len(), 2);
    }

    #[test]
    fn csv_round_trip() {
        let mut all = rows("a", &["X", "Y", "X"]);
        all.extend(rows("b", &["P"]));
        let t = count(&all, |r| if r == "a" { 1 } else { 2 });
        assert_eq!(TallyResult::from_csv(&t.to_csv()).unwrap(), t);
        assert!(count(&[], |_| 1).races.is_empty());
    }
}

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use super::CapacityError;

const BUNDLED_TABLE: &str = include_str!("../../data/mcs_table.txt");

/// Spectral efficiency kept as an exact decimal fraction `numerator / 10^scale`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpectralEfficiency {
    numerator: u64,
    scale: u32,
}

impl SpectralEfficiency {
    pub fn numerator(&self) -> u64 {
        self.numerator
    }

    pub fn denominator(&self) -> u64 {
        10u64.pow(self.scale)
    }

    pub fn as_f64(&self) -> f64 {
        self.numerator as f64 / self.denominator() as f64
    }
}

impl FromStr for SpectralEfficiency {
    type Err = CapacityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || CapacityError::BadEfficiency(s.to_string());
        let (int_part, frac_part) = match s.split_once('.') {
            Some((i, f)) => (i, f),
            None => (s, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(bad());
        }
        let all_digits = |p: &str| p.bytes().all(|b| b.is_ascii_digit());
        if !all_digits(int_part) || !all_digits(frac_part) || frac_part.len() > 9 {
            return Err(bad());
        }
        let digits = format!("{int_part}{frac_part}");
        let numerator: u64 = digits.parse().map_err(|_| bad())?;
        if numerator == 0 {
            return Err(bad());
        }
        Ok(Self {
            numerator,
            scale: frac_part.len() as u32,
        })
    }
}

impl fmt::Display for SpectralEfficiency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let den = self.denominator();
        if self.scale == 0 {
            write!(f, "{}", self.numerator)
        } else {
            write!(
                f,
                "{}.{:0width$}",
                self.numerator / den,
                self.numerator % den,
                width = self.scale as usize
            )
        }
    }
}

/// One row of a PSSCH MCS table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McsEntry {
    pub index: u8,
    /// Bits per modulation symbol.
    pub modulation_order: u8,
    pub spectral_efficiency: SpectralEfficiency,
}

impl McsEntry {
    pub fn new(
        index: u8,
        modulation_order: u8,
        spectral_efficiency: SpectralEfficiency,
    ) -> Result<Self, CapacityError> {
        if index > 27 {
            return Err(CapacityError::McsIndexOutOfRange(index));
        }
        if !matches!(modulation_order, 2 | 4 | 6 | 8) {
            return Err(CapacityError::BadModulationOrder(modulation_order));
        }
        Ok(Self {
            index,
            modulation_order,
            spectral_efficiency,
        })
    }

    /// Index 1, QPSK, efficiency 0.2344: the entry used for Ledger dimensioning.
    pub fn qpsk_ledger_default() -> Self {
        McsTable::bundled()
            .get(1)
            .expect("bundled MCS table carries index 1")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct McsTable {
    entries: Vec<McsEntry>,
}

impl McsTable {
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_TABLE).expect("bundled MCS table parses")
    }

    pub fn load(path: &Path) -> Result<Self, CapacityError> {
        let text = std::fs::read_to_string(path).map_err(|e| CapacityError::McsTableIo {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    /// Parses `index modulation_order spectral_efficiency` rows. Fields are
    /// separated by whitespace or commas; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, CapacityError> {
        let mut entries: Vec<McsEntry> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let line_err = |message: String| CapacityError::McsTableLine {
                line: lineno + 1,
                message,
            };
            let fields: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|f| !f.is_empty())
                .collect();
            if fields.len() != 3 {
                return Err(line_err(format!("expected 3 fields, found {}", fields.len())));
            }
            let index: u8 = fields[0]
                .parse()
                .map_err(|_| line_err(format!("bad index `{}`", fields[0])))?;
            let order: u8 = fields[1]
                .parse()
                .map_err(|_| line_err(format!("bad modulation order `{}`", fields[1])))?;
            let eff: SpectralEfficiency = fields[2].parse().map_err(|e: CapacityError| line_err(e.to_string()))?;
            let entry = McsEntry::new(index, order, eff).map_err(|e| line_err(e.to_string()))?;
            if entries.iter().any(|e| e.index == index) {
                return Err(line_err(format!("duplicate index {index}")));
            }
            entries.push(entry);
        }
        entries.sort_by_key(|e| e.index);
        Ok(Self { entries })
    }

    pub fn get(&self, index: u8) -> Option<McsEntry> {
        self.entries.iter().find(|e| e.index == index).copied()
    }

    pub fn lookup(&self, index: u8) -> Result<McsEntry, CapacityError> {
        self.get(index).ok_or(CapacityError::UnknownMcs(index))
    }

    pub fn entries(&self) -> &[McsEntry] {
        &self.entries
    }
}

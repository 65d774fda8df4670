use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::RawRating;
use crate::error::{Error, Result};

pub const RATINGS_HEADER: &str = "userId,movieId,rating,timestamp";

/// Parses a MovieLens `ratings.csv` stream: a header line followed by
/// `userId,movieId,rating,timestamp` rows. Line numbers in errors are
/// 1-based and count the header.
pub fn parse_ratings<R: BufRead>(reader: R) -> Result<Vec<RawRating>> {
    let mut lines = reader.lines().enumerate();
    let header = loop {
        match lines.next() {
            None => return Err(Error::Empty("ratings stream has no header")),
            Some((n, line)) => {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                break (n + 1, line);
            }
        }
    };
    let cols: Vec<&str> = header.1.trim().split(',').map(str::trim).collect();
    if cols != RATINGS_HEADER.split(',').collect::<Vec<_>>() {
        return Err(Error::Parse {
            line: header.0,
            msg: format!(
                "expected header `{RATINGS_HEADER}`, got `{}`",
                header.1.trim()
            ),
        });
    }

    let mut out = Vec::new();
    for (n, line) in lines {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        out.push(parse_line(line).map_err(|msg| Error::Parse { line: n + 1, msg })?);
    }
    if out.is_empty() {
        return Err(Error::Empty("ratings stream has no data lines"));
    }
    Ok(out)
}

fn parse_line(line: &str) -> std::result::Result<RawRating, String> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 4 {
        return Err(format!("expected 4 fields, found {}", fields.len()));
    }
    let user_id = fields[0]
        .parse::<u64>()
        .map_err(|e| format!("userId `{}`: {e}", fields[0]))?;
    let item_id = fields[1]
        .parse::<u64>()
        .map_err(|e| format!("movieId `{}`: {e}", fields[1]))?;
    let rating = fields[2]
        .parse::<f64>()
        .map_err(|e| format!("rating `{}`: {e}", fields[2]))?;
    let timestamp = fields[3]
        .parse::<i64>()
        .map_err(|e| format!("timestamp `{}`: {e}", fields[3]))?;
    if rating.is_nan() || rating <= 0.0 || !rating.is_finite() {
        return Err(format!("rating must be positive, got {rating}"));
    }
    if timestamp < 0 {
        return Err(format!("timestamp must be non-negative, got {timestamp}"));
    }
    Ok(RawRating {
        user_id,
        item_id,
        rating,
        timestamp,
    })
}

pub fn read_ratings_file(path: impl AsRef<Path>) -> Result<Vec<RawRating>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_ratings(BufReader::new(file))
}

pub fn write_ratings_csv<W: Write>(mut w: W, ratings: &[RawRating]) -> std::io::Result<()> {
    writeln!(w, "{RATINGS_HEADER}")?;
    for r in ratings {
        writeln!(
            w,
            "{},{},{:.1},{}",
            r.user_id, r.item_id, r.rating, r.timestamp
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<Vec<RawRating>> {
        parse_ratings(s.as_bytes())
    }

    #[test]
    fn single_line_maps_fields() {
        let r = parse("userId,movieId,rating,timestamp\n1,122,3.5,1112486027\n").unwrap();
        assert_eq!(
            r,
            vec![RawRating {
                user_id: 1,
                item_id: 122,
                rating: 3.5,
                timestamp: 1112486027
            }]
        );
    }

    #[test]
    fn malformed_rating_reports_line() {
        let err = parse("userId,movieId,rating,timestamp\n1,2,4.0,5\n1,122,abc,0\n").unwrap_err();
        match err {
            Error::Parse { line, msg } => {
                assert_eq!(line, 3);
                assert!(msg.contains("rating"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn order_is_preserved() {
        let r = parse("userId,movieId,rating,timestamp\n2,1,1.0,0\n1,2,2.0,0\n").unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!((r[0].user_id, r[1].user_id), (2, 1));
    }

    #[test]
    fn empty_stream_and_header_only_are_errors() {
        assert!(matches!(parse(""), Err(Error::Empty(_))));
        assert!(matches!(
            parse("userId,movieId,rating,timestamp\n"),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn unknown_columns_rejected() {
        assert!(matches!(
            parse("userId,movieId,rating,timestamp,tag\n1,2,3.0,4,x\n"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse("userId,movieId,rating,timestamp\n1,2,3.0,4,x\n"),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn nonpositive_rating_rejected() {
        assert!(parse("userId,movieId,rating,timestamp\n1,2,0,4\n").is_err());
        assert!(parse("userId,movieId,rating,timestamp\n1,2,1.0,-4\n").is_err());
    }

    #[test]
    fn write_then_parse() {
        let rs = vec![RawRating {
            user_id: 4,
            item_id: 8,
            rating: 0.5,
            timestamp: 9,
        }];
        let mut buf = Vec::new();
        write_ratings_csv(&mut buf, &rs).unwrap();
        assert_eq!(parse_ratings(&buf[..]).unwrap(), rs);
    }
}

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scene::{Drawing, Point2, Stroke};

fn pct(v: f32) -> String {
    format!("{:.4}%", v.clamp(0.0, 1.0) * 100.0)
}

fn rgb(c: &[f32]) -> String {
    format!("rgb({},{},{})", pct(c[0]), pct(c[1]), pct(c[2]))
}

/// One `<path>` per stroke, painted in order over a background rect.
pub fn to_svg_string(d: &Drawing) -> String {
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = d.width,
        h = d.height
    );
    let _ = writeln!(
        s,
        r#"  <rect x="0" y="0" width="{}" height="{}" fill="{}"/>"#,
        d.width,
        d.height,
        rgb(&d.background)
    );
    for st in &d.strokes {
        let p = &st.points;
        let _ = writeln!(
            s,
            r#"  <path d="M {} {} C {} {} {} {} {} {}" fill="none" stroke="{}" stroke-opacity="{}" stroke-width="{}" stroke-linecap="round" stroke-linejoin="round"/>"#,
            p[0].x,
            p[0].y,
            p[1].x,
            p[1].y,
            p[2].x,
            p[2].y,
            p[3].x,
            p[3].y,
            rgb(&st.color),
            st.color[3],
            2.0 * st.radius
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn export_svg(d: &Drawing, path: &Path) -> Result<()> {
    super::write_atomic(path, to_svg_string(d).as_bytes())
}

fn parse_err(msg: impl Into<String>) -> Error {
    Error::Parse(msg.into())
}

fn num(s: &str) -> Result<f32> {
    s.trim()
        .parse::<f32>()
        .map_err(|_| parse_err(format!("bad number `{s}`")))
}

fn parse_channel(s: &str) -> Result<f32> {
    let s = s.trim();
    match s.strip_suffix('%') {
        Some(p) => Ok(num(p)? / 100.0),
        None => Ok(num(s)? / 255.0),
    }
}

fn parse_color(s: &str) -> Result<[f32; 3]> {
    let s = s.trim();
    if let Some(hex) = s.strip_prefix('#') {
        if hex.len() != 6 {
            return Err(parse_err(format!("bad color `{s}`")));
        }
        let mut out = [0.0; 3];
        for (k, o) in out.iter_mut().enumerate() {
            let v =
                u8::from_str_radix(&hex[2 * k..2 * k + 2], 16).map_err(|_| parse_err(format!("bad color `{s}`")))?;
            *o = v as f32 / 255.0;
        }
        return Ok(out);
    }
    if s == "white" {
        return Ok([1.0; 3]);
    }
    if s == "black" {
        return Ok([0.0; 3]);
    }
    let inner = s
        .strip_prefix("rgb(")
        .and_then(|r| r.strip_suffix(')'))
        .ok_or_else(|| parse_err(format!("bad color `{s}`")))?;
    let parts: Vec<&str> = inner.split(',').collect();
    if parts.len() != 3 {
        return Err(parse_err(format!("bad color `{s}`")));
    }
    Ok([
        parse_channel(parts[0])?,
        parse_channel(parts[1])?,
        parse_channel(parts[2])?,
    ])
}

/// Absolute `M x y C x y x y x y` path data.
fn parse_path(d: &str) -> Result<[Point2; 4]> {
    let spaced = d.replace(',', " ");
    let rest: Vec<&str> = spaced.split_whitespace().collect();
    if rest.len() != 10 || rest[0] != "M" || rest[3] != "C" {
        return Err(parse_err(format!("unsupported path data `{d}`")));
    }
    let v: Vec<f32> = rest
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != 0 && *i != 3)
        .map(|(_, t)| num(t))
        .collect::<Result<_>>()?;
    Ok([
        Point2::new(v[0], v[1]),
        Point2::new(v[2], v[3]),
        Point2::new(v[4], v[5]),
        Point2::new(v[6], v[7]),
    ])
}

/// Read back an SVG in the layout written by [`to_svg_string`].
pub fn parse_svg(text: &str) -> Result<Drawing> {
    let doc = roxmltree::Document::parse(text).map_err(|e| parse_err(e.to_string()))?;
    let root = doc.root_element();
    if root.tag_name().name() != "svg" {
        return Err(parse_err("root element is not <svg>"));
    }
    let view: Vec<f32> = root
        .attribute("viewBox")
        .ok_or_else(|| parse_err("missing viewBox"))?
        .split_whitespace()
        .map(num)
        .collect::<Result<_>>()?;
    if view.len() != 4 {
        return Err(parse_err("viewBox must have four numbers"));
    }
    let mut drawing = Drawing::new(view[2] as u32, view[3] as u32)?;
    for node in root.children().filter(|n| n.is_element()) {
        match node.tag_name().name() {
            "rect" => {
                if let Some(fill) = node.attribute("fill") {
                    drawing.background = parse_color(fill)?;
                }
            }
            "path" => {
                let points = parse_path(node.attribute("d").ok_or_else(|| parse_err("path without d"))?)?;
                let c = parse_color(node.attribute("stroke").unwrap_or("black"))?;
                let alpha = node.attribute("stroke-opacity").map(num).transpose()?.unwrap_or(1.0);
                let width = node.attribute("stroke-width").map(num).transpose()?.unwrap_or(1.0);
                drawing.strokes.push(Stroke {
                    points,
                    radius: width / 2.0,
                    color: [c[0], c[1], c[2], alpha],
                });
            }
            _ => {}
        }
    }
    Ok(drawing)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{render, RasterOptions};

    #[test]
    fn empty_drawing_has_only_background() {
        let d = Drawing::new(10, 20).unwrap();
        let svg = to_svg_string(&d);
        assert_eq!(svg.matches("<rect").count(), 1);
        assert_eq!(svg.matches("<path").count(), 0);
        assert!(svg.contains(r#"viewBox="0 0 10 20""#));
    }

    #[test]
    fn one_stroke_one_path() {
        let d = Drawing::init_random(1, 32, 32, 4).unwrap();
        let svg = to_svg_string(&d);
        assert_eq!(svg.matches("<path").count(), 1);
        let path = svg.lines().find(|l| l.contains("<path")).unwrap();
        let data = path.split("d=\"").nth(1).unwrap().split('"').next().unwrap();
        assert_eq!(data.matches('M').count(), 1);
        assert_eq!(data.matches('C').count(), 1);
        assert!(path.contains(r#"stroke-linecap="round""#));
        assert!(path.contains(r#"fill="none""#));
    }

    #[test]
    fn parse_round_trip_renders_the_same() {
        let d = Drawing::init_random(30, 48, 48, 12).unwrap();
        let back = parse_svg(&to_svg_string(&d)).unwrap();
        assert_eq!(back.strokes.len(), 30);
        let a = render(&d, RasterOptions::default()).unwrap();
        let b = render(&back, RasterOptions::default()).unwrap();
        let mean = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum::<f32>() / a.numel() as f32;
        assert!(mean < 0.02, "{mean}");
    }

    #[test]
    fn colors_parse_in_three_notations() {
        assert_eq!(parse_color("#ff0000").unwrap(), [1.0, 0.0, 0.0]);
        assert_eq!(parse_color("rgb(255, 0, 51)").unwrap(), [1.0, 0.0, 0.2]);
        assert_eq!(parse_color("rgb(50%,0%,100%)").unwrap(), [0.5, 0.0, 1.0]);
        assert!(parse_color("rgb(1,2)").is_err());
    }
}

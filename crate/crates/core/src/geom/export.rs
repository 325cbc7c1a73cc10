use std::fmt::Write as _;
use std::path::Path;

use crate::cadprog::{serialize_program, CadProgram, Curve, SketchPlane};
use crate::error::Result;
use crate::geom2d::V2;
use crate::V3;

use super::boolean_mesh::extract_mesh;
use super::mesh::TriMesh;
use super::Deflection;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExportKind {
    Obj,
    StepSkeleton,
    HistoryJson,
}

pub fn mesh_to_obj(m: &TriMesh) -> String {
    let mut s = String::with_capacity(m.vertices.len() * 40 + m.len() * 24);
    for v in &m.vertices {
        let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
    }
    for t in &m.triangles {
        let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    s
}

struct Step {
    body: String,
    next: usize,
}

impl Step {
    fn add(&mut self, entity: String) -> usize {
        let id = self.next;
        self.next += 1;
        let _ = writeln!(self.body, "#{id}={entity};");
        id
    }

    fn point(&mut self, p: V3) -> usize {
        self.add(format!("CARTESIAN_POINT('',({:?},{:?},{:?}))", p.x, p.y, p.z))
    }

    fn direction(&mut self, d: V3) -> usize {
        self.add(format!("DIRECTION('',({:?},{:?},{:?}))", d.x, d.y, d.z))
    }

    fn placement(&mut self, origin: V3, z: V3, x: V3) -> usize {
        let (o, z, x) = (self.point(origin), self.direction(z), self.direction(x));
        self.add(format!("AXIS2_PLACEMENT_3D('',#{o},#{z},#{x})"))
    }

    fn curve(&mut self, plane: &SketchPlane, c: &Curve) -> usize {
        let w = |p: V2| plane.to_world(p);
        match *c {
            Curve::Line { start, end } => {
                let p = self.point(w(start));
                let d = w(end) - w(start);
                let dir = self.direction(d.normalize());
                let v = self.add(format!("VECTOR('',#{dir},{:?})", d.norm()));
                self.add(format!("LINE('',#{p},#{v})"))
            }
            Curve::Arc { start, end, .. } => {
                let g = c.arc_geom().expect("validated arc");
                let axis = self.placement(w(g.center), plane.normal, plane.x_axis);
                let circle = self.add(format!("CIRCLE('',#{axis},{:?})", g.radius));
                let (s, e) = (self.point(w(start)), self.point(w(end)));
                let sense = if g.sweep > 0.0 { ".T." } else { ".F." };
                self.add(format!("TRIMMED_CURVE('',#{circle},(#{s}),(#{e}),{sense},.CARTESIAN.)"))
            }
            Curve::Circle { center, radius, .. } => {
                let axis = self.placement(w(center), plane.normal, plane.x_axis);
                self.add(format!("CIRCLE('',#{axis},{radius:?})"))
            }
        }
    }
}

/// ISO-10303-21 skeleton: one placement and profile-curve chain per block,
/// booleans recorded as comments only.
pub fn program_to_step(p: &CadProgram) -> String {
    let mut st = Step {
        body: String::new(),
        next: 1,
    };
    for (i, b) in p.blocks.iter().enumerate() {
        let _ = writeln!(st.body, "/* block {i}: op {}, depth {:?} */", b.op, b.depth);
        st.placement(b.plane.origin, b.plane.normal, b.plane.x_axis);
        let mut curves = Vec::new();
        for l in &b.loops {
            for c in &l.curves {
                curves.push(st.curve(&b.plane, c));
            }
        }
        let refs: Vec<String> = curves.iter().map(|c| format!("#{c}")).collect();
        st.add(format!("GEOMETRIC_CURVE_SET('block_{i}',({}))", refs.join(",")));
        let dir = st.direction(b.plane.normal);
        st.add(format!("VECTOR('extrude_{i}',#{dir},{:?})", b.depth));
    }
    let mut out = String::new();
    out.push_str("ISO-10303-21;\nHEADER;\n");
    out.push_str("FILE_DESCRIPTION(('extrude skeleton'),'2;1');\n");
    out.push_str("FILE_NAME('','1970-01-01T00:00:00',(''),(''),'cadseq','cadseq','');\n");
    out.push_str("FILE_SCHEMA(('CONFIG_CONTROL_DESIGN'));\nENDSEC;\nDATA;\n");
    out.push_str(&st.body);
    out.push_str("ENDSEC;\nEND-ISO-10303-21;\n");
    out
}

pub fn export(p: &CadProgram, kind: ExportKind, path: &Path, defl: Deflection) -> Result<()> {
    let text = match kind {
        ExportKind::Obj => mesh_to_obj(&extract_mesh(p, defl)?),
        ExportKind::StepSkeleton => program_to_step(p),
        ExportKind::HistoryJson => serialize_program(p),
    };
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cadprog::parse_program;

    const CUBE: &str = r#"{"blocks":[{"plane":{"normal":[0,0,1],"origin":[0,0,0],"x_axis":[1,0,0]},
        "loops":[{"curves":[
            {"type":"line","start":[0,0],"end":[1,0]},
            {"type":"line","start":[1,0],"end":[1,1]},
            {"type":"line","start":[1,1],"end":[0,1]},
            {"type":"line","start":[0,1],"end":[0,0]}]}],
        "depth":1,"op":"new"}]}"#;

    #[test]
    fn cube_obj_counts() {
        let p = parse_program(CUBE).unwrap();
        let obj = mesh_to_obj(&extract_mesh(&p, Deflection::default()).unwrap());
        assert_eq!(obj.lines().filter(|l| l.starts_with("v ")).count(), 8);
        assert_eq!(obj.lines().filter(|l| l.starts_with("f ")).count(), 12);
    }

    #[test]
    fn step_framing() {
        let p = parse_program(CUBE).unwrap();
        let s = program_to_step(&p);
        assert!(s.starts_with("ISO-10303-21;"));
        assert!(s.trim_end().ends_with("END-ISO-10303-21;"));
        assert!(s.contains("AXIS2_PLACEMENT_3D"));
        assert!(s.contains("op new"));
    }
}

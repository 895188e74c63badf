use crate::error::{Error, Result};

/// `teacher <- decay * teacher + (1 - decay) * student`, tensor by tensor.
pub fn ema_update(teacher: &mut [Vec<f32>], student: &[Vec<f32>], decay: f32) -> Result<()> {
    if !(0.0..1.0).contains(&decay) {
        return Err(Error::InvalidConfig(format!("EMA decay must lie in [0, 1), got {decay}")));
    }
    if teacher.len() != student.len() || teacher.iter().zip(student).any(|(t, s)| t.len() != s.len()) {
        return Err(Error::InvalidInput("teacher and student parameters differ in structure".into()));
    }
    let keep = 1.0 - decay;
    for (t, s) in teacher.iter_mut().zip(student) {
        for (a, &b) in t.iter_mut().zip(s) {
            *a = decay * *a + keep * b;
        }
    }
    Ok(())
}

use super::{PoolInstance, ReducedInstance};

/// Combinatorial orthogonal matching pursuit.
///
/// A zero reading certifies every column active in it as negative. The
/// survivors are the columns never active in a zero row; under
/// multiplicative noise they always contain the true support.
pub fn comp(instance: &PoolInstance) -> ReducedInstance {
    let a = &instance.matrix;
    let s = a.cols();
    let mut cleared = vec![false; s];
    let mut active_rows = Vec::new();
    for (i, &z) in instance.noisy.iter().enumerate() {
        if z > 0.0 {
            active_rows.push(i);
        } else {
            for (c, &e) in cleared.iter_mut().zip(a.row(i)) {
                *c |= e == 1;
            }
        }
    }
    let survivors: Vec<usize> = (0..s).filter(|&j| !cleared[j]).collect();
    let sub_matrix = a.restrict(&active_rows, &survivors);
    let sub_measurements = active_rows.iter().map(|&i| instance.noisy[i]).collect();
    ReducedInstance {
        survivors,
        active_rows,
        sub_matrix,
        sub_measurements,
        pool_width: s,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrices::SensingMatrix;

    #[test]
    fn identity_sensing() {
        let inst = PoolInstance::new(SensingMatrix::identity(3), vec![0.0, 5.2, 0.0]).unwrap();
        let r = comp(&inst);
        assert_eq!(r.survivors, vec![1]);
        assert_eq!(r.active_rows, vec![1]);
        assert_eq!(r.sub_matrix, vec![vec![1]]);
        assert_eq!(r.sub_measurements, vec![5.2]);
    }

    #[test]
    fn all_positive_means_no_reduction() {
        let m = SensingMatrix::from_rows(vec![vec![1, 1, 0], vec![0, 1, 1]]).unwrap();
        let r = comp(&PoolInstance::new(m.clone(), vec![1.0, 2.0]).unwrap());
        assert_eq!(r.survivors, vec![0, 1, 2]);
        assert_eq!(r.sub_matrix, m.to_rows());
        assert_eq!((r.m_star(), r.s_star()), (2, 3));
    }
}

mod common;

use proptest::prelude::*;

use common::props;

proptest! {
    #![proptest_config(common::proptest_config(200))]

    #[test]
    fn feasible_systems_pass_every_necessary_test(seed in any::<u64>()) {
        props::feasible_passes_all(seed).map_err(TestCaseError::fail)?;
    }
}

int placeholder_test_variance;

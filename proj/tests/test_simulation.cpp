int placeholder_test_simulation;

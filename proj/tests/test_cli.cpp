int placeholder_test_cli;

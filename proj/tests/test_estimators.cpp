int placeholder_test_estimators;

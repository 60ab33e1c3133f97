int phasebeat_stub_test_eval() { return 0; }

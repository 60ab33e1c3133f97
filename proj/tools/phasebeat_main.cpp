int phasebeat_stub_phasebeat_main() { return 0; }
int main() { return 0; }

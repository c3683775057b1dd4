// Copyright 2026 the molgen authors
// SPDX-License-Identifier: Apache-2.0

int main() { return 0; }

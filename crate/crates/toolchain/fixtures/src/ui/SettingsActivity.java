package com.example.mail.ui;

import android.os.Bundle;
import android.view.View;

public class SettingsActivity extends BaseActivity {
    private final View.OnClickListener wipeListener = v -> confirmWipe();

    @Override
    protected void onCreate(Bundle state) {
        super.onCreate(state);
        setContentView(R.layout.settings);
        View wipe = findViewById(R.id.btn_wipe);
        wipe.setOnClickListener(wipeListener);
    }

    void confirmWipe() {
        AccountStore.wipe();
    }
}
